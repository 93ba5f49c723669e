#pragma once

#include "proximh/common.hpp"

#include <iosfwd>
#include <string>

namespace pimh {

/// Dense operators (A, Ã, O, F, F̃) are plain Eigen matrices. `check_operator`
/// enforces the finiteness invariant where an operator enters the library.
using DenseOperator = Matrix;

void check_operator(const DenseOperator& m, const std::string& name);

/// Proximal correction operator K = (AᵀA + βI)⁻¹(AᵀÃ + βI) and its inverse.
struct CorrectionOperatorK {
  double beta = 0.0;
  Matrix k;
  Matrix k_inverse;
};

/// Orthogonal factor and non-increasing spectrum of a test operator.
struct SpectralFactorization {
  Matrix v;
  Vector s;
};

CorrectionOperatorK build_k(const Matrix& a, const Matrix& a_tilde, double beta);

/// (AᵀA + βI)⁻¹Aᵀ, shape d_x × d_y.
Matrix regularized_pseudoinverse(const Matrix& a, double beta);

/// Inverse through partial-pivoting LU; throws ConditioningError when the
/// reciprocal 1-norm condition estimate falls below `min_rcond`.
Matrix checked_inverse(const Matrix& m, const std::string& what, double min_rcond = 1e-14);

/// Largest singular value by power iteration on MᵀM.
double spectral_norm(const Matrix& m, double tol = 1e-8, int max_iter = 20000);

/// 2-norm condition number through a full SVD (small matrices only).
double condition_number(const Matrix& m);

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the sign
/// of diag(R) folded into Q.
Matrix random_orthogonal(Eigen::Index d, Rng& rng);

/// Gaussian rows × cols matrix redrawn until its condition number is at most
/// `max_condition`.
Matrix well_conditioned_gaussian(Eigen::Index rows, Eigen::Index cols, double max_condition,
                                 Rng& rng, int max_attempts = 1000);

enum class PerturbationKind { multiplicative, additive_lowrank, truncation };

PerturbationKind parse_perturbation_kind(const std::string& name);
std::string to_string(PerturbationKind kind);

struct PerturbationParams {
  // multiplicative
  double alpha_minus = 0.8;
  double alpha_plus = 1.2;
  // additive low rank
  double epsilon = 0.02;
  int rank = 5;
  // truncation
  double threshold = 0.05;
  // S_ii = i^-decay_exponent
  double decay_exponent = 1.0;
  // bound defining a "well conditioned" observation operator
  double max_observation_condition = 10.0;
};

struct TestOperators {
  Matrix f;
  Matrix f_tilde;
  Matrix o;
  SpectralFactorization spectrum;
};

/// Test-operator factories for the three perturbation families: multiplicative
/// spectral noise, additive rank-`rank` noise, and spectral truncation.
TestOperators make_test_operator(PerturbationKind kind, Eigen::Index d_x, Eigen::Index d_y,
                                 const PerturbationParams& params, std::uint64_t seed);

struct DiscrepancyNorms {
  double latent_norm = 0.0;    // ‖I − F̃⁻¹F‖₂
  double proximal_norm = 0.0;  // ‖I − K⁻¹‖₂
};

DiscrepancyNorms discrepancy_norms(const Matrix& f, const Matrix& f_tilde,
                                   const CorrectionOperatorK& k);

// Binary container: "PIMH", u32 version, u64 rows, u64 cols, row-major
// little-endian float64 payload.
inline constexpr std::uint32_t kContainerVersion = 1;

void write_operator(std::ostream& out, const Matrix& m);
Matrix read_operator(std::istream& in);
void save_operator(const std::string& path, const Matrix& m);
Matrix load_operator(const std::string& path);

}  // namespace pimh
