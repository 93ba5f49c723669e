#pragma once

#include "proximh/common.hpp"
#include "proximh/densities.hpp"
#include "proximh/linalg.hpp"

#include <string>

namespace pimh {

enum class PosteriorKind { exact, approx, latent, proximal };

PosteriorKind parse_posterior_kind(const std::string& name);
std::string to_string(PosteriorKind kind);

/// y = O F x + e, e ~ N(0, σ²I), with the surrogate Ã = O F̃. `f` and
/// `f_tilde` may be left empty when only A and Ã are known; the latent
/// posterior is then unavailable.
struct LinearInverseProblem {
  Matrix a;
  Matrix a_tilde;
  Matrix o;
  Matrix f;
  Matrix f_tilde;
  double sigma = 1.0;
  DensityPtr prior;
  /// Set when `prior` is N(0, I); enables the closed forms.
  bool standard_gaussian_prior = false;
  Vector y;

  Eigen::Index dim() const { return a.cols(); }
  Eigen::Index obs_dim() const { return a.rows(); }
  bool has_latent() const { return f.size() > 0 && f_tilde.size() > 0; }
};

LinearInverseProblem make_linear_problem(Matrix o, Matrix f, Matrix f_tilde, double sigma,
                                         DensityPtr prior, bool standard_gaussian_prior,
                                         Vector y = Vector());
LinearInverseProblem make_linear_problem_from_operators(Matrix a, Matrix a_tilde, double sigma,
                                                        DensityPtr prior,
                                                        bool standard_gaussian_prior,
                                                        Vector y = Vector());

/// Throws DimensionError / ParameterError when the problem is inconsistent.
void validate(const LinearInverseProblem& prob);

/// F̃⁻¹F for the latent posterior, after checking that both inverses exist
/// and ‖F F⁻¹ − I‖ ≤ 1e-8.
Matrix latent_map(const LinearInverseProblem& prob);

/// F⁻¹F̃, which maps approximate-posterior draws to latent-posterior draws.
Matrix latent_pushforward(const LinearInverseProblem& prob);

/// Gaussian noise log-likelihood −‖y − z‖²/(2σ²).
double log_likelihood(const LinearInverseProblem& prob, const Vector& predicted);

/// Unnormalized log posterior of the requested family.
double log_posterior(PosteriorKind kind, const LinearInverseProblem& prob,
                     const CorrectionOperatorK* k, const Vector& x);

struct GaussianPosteriorForm {
  PosteriorKind variant = PosteriorKind::exact;
  Matrix mean_map;    // d × d_y
  Matrix covariance;  // d × d
};

GaussianPosteriorForm gaussian_posterior_form(PosteriorKind kind, const LinearInverseProblem& prob,
                                              const CorrectionOperatorK* k);

/// Symmetric square root of a covariance. Eigenvalues in [−1e-10, 0) are
/// clamped to zero; anything more negative is a ConditioningError.
Matrix symmetric_sqrt(const Matrix& cov, double psd_floor = 1e-10);

/// Reusable N(μ, Σ) sampler.
struct GaussianSampler {
  Vector mean;
  Matrix root;

  GaussianSampler(Vector mean, const Matrix& covariance);
  Vector draw(Rng& rng) const { return mean + root * standard_normal(rng, mean.size()); }
};

/// n draws as the columns of a d × n matrix.
Matrix sample_gaussian_posterior(const GaussianPosteriorForm& form, const Vector& y, Eigen::Index n,
                                 std::uint64_t seed);

}  // namespace pimh
