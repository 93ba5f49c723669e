#pragma once

#include "proximh/common.hpp"
#include "proximh/linalg.hpp"
#include "proximh/posteriors.hpp"

#include <array>

namespace pimh {

/// Diagonal setting: O = [I 0], F = diag(s, 1…), F̃ = diag(α ⊙ (s, 1…)).
struct DiagonalSpec {
  Vector s;      // d_y entries
  Vector alpha;  // d entries
  double sigma = 1.0;

  Eigen::Index d() const { return alpha.size(); }
  Eigen::Index d_y() const { return s.size(); }
  double rho(Eigen::Index i) const;
  double zeta(Eigen::Index i) const;
  /// Covariance ratio (Σ_p)_ii/Σ_ii of the proximal posterior at β = σ².
  double rho_proximal(Eigen::Index i) const;
};

void validate(const DiagonalSpec& spec);

/// s ~ U[0.2, 3], α ~ U[0.5, 1.5], σ ~ U[0.1, 1.5].
DiagonalSpec random_diagonal_spec(Eigen::Index d, Eigen::Index d_y, Rng& rng);

struct KLTerms {
  double covariance_mismatch = 0.0;
  double mean_mismatch = 0.0;
  double total() const { return covariance_mismatch + mean_mismatch; }
};

struct KLReport {
  double d_a = 0.0;
  double d_l = 0.0;
  double d_p = 0.0;
  KLTerms approx;
  KLTerms latent;
  KLTerms proximal;
};

/// Closed-form expected KL divergences in the diagonal setting with β = σ².
KLReport kl_diagonal(const DiagonalSpec& spec);

/// Linear problem (standard Gaussian prior) realizing a diagonal spec.
LinearInverseProblem diagonal_problem(const DiagonalSpec& spec);

/// Expected KL of each proposal posterior against the exact posterior:
/// log|Σ|/|Σ_v| + Tr(Σ⁻¹Σ_v) − d plus E_y‖(A_v† − A†)y‖²_{Σ⁻¹}. The latent
/// term is NaN when F, F̃ are not available.
KLReport kl_gaussian_general(const LinearInverseProblem& prob, const CorrectionOperatorK& k);

struct MonteCarloKL {
  std::array<double, 3> estimates{};   // approx, latent, proximal
  std::array<double, 3> std_errors{};
};

/// Averages 2·KL(π_v(·|y) ‖ π(·|y)) over y = Ax₀ + e, parallel over draws.
MonteCarloKL kl_monte_carlo(const LinearInverseProblem& prob, const CorrectionOperatorK& k,
                            Eigen::Index n_y, std::uint64_t seed);
/// Single-threaded reference of kl_monte_carlo; results are identical.
MonteCarloKL kl_monte_carlo_serial(const LinearInverseProblem& prob, const CorrectionOperatorK& k,
                                   Eigen::Index n_y, std::uint64_t seed);

struct MixingQuantities {
  double approx_q = 0.0;    // ‖AᵀΔA‖₂/σ²
  double latent_q = 0.0;    // ‖I − F̃⁻¹F‖₂
  double proximal_q = 0.0;  // ‖I − K⁻¹‖₂
};

MixingQuantities mixing_quantities(const LinearInverseProblem& prob, const CorrectionOperatorK& k);

/// Small-ε asymptotics of the three diagonal KL divergences.
std::array<double, 3> kl_leading_order(const DiagonalSpec& spec, double epsilon);

/// General-case sweep instance: F = V S Vᵀ with S_ii = 1/i², F̃ = V S̃ Vᵀ with
/// S̃_ii = α_i/i², α_i = 1 + ε ξ_i (ξ_1 = ±1, |ξ_i| ≤ 1, so ‖F − F̃‖/‖F‖ = ε),
/// Gaussian O, and σ chosen so that ‖A‖₂²/σ² = 10^log10_snr.
struct KlSweepInstance {
  LinearInverseProblem prob;
  CorrectionOperatorK k;
};

KlSweepInstance make_kl_sweep_instance(Eigen::Index d, Eigen::Index d_y, double log10_snr,
                                       double operator_error, std::uint64_t seed);

/// Compensated (Neumaier) sum.
double stable_sum(const double* values, std::size_t n, std::size_t stride = 1);

}  // namespace pimh
