#pragma once

#include "proximh/common.hpp"
#include "proximh/densities.hpp"
#include "proximh/krylov.hpp"
#include "proximh/linalg.hpp"

#include <functional>
#include <memory>
#include <string>

namespace pimh {

/// Forward map linearized at a point: the value and Jacobian products.
class Linearization {
 public:
  virtual ~Linearization() = default;
  virtual const Vector& value() const = 0;
  virtual Vector jvp(const Vector& v) const = 0;
  virtual Vector vjp(const Vector& w) const = 0;
};

/// Nonlinear forward model x ↦ A(x). Implementations must be safe to call
/// concurrently from several threads.
class NonlinearModel {
 public:
  virtual ~NonlinearModel() = default;
  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::Index output_dim() const = 0;
  virtual Vector apply(const Vector& x) const { return linearize(x)->value(); }
  virtual std::unique_ptr<Linearization> linearize(const Vector& x) const = 0;
};

using ModelPtr = std::shared_ptr<const NonlinearModel>;

/// x ↦ M x.
ModelPtr make_matrix_model(Matrix m);

/// z ↦ M G(z) for a fixed synthetic generator G.
ModelPtr make_generator_model(Matrix m, SyntheticGenerator g);

/// Model given by a value function and a dense Jacobian function.
ModelPtr make_function_model(Eigen::Index input_dim, Eigen::Index output_dim,
                             std::function<Vector(const Vector&)> value,
                             std::function<Matrix(const Vector&)> jacobian);

/// Exact and approximate model for one source term.
struct SourcePair {
  ModelPtr forward;
  ModelPtr forward_tilde;
};

struct GaussNewtonStep {
  double beta = 1.0;
  ModelPtr forward;
  ModelPtr forward_tilde;
  CgSettings solver;
};

/// K·x̃.
Vector proximal_correct_linear(const CorrectionOperatorK& k, const Vector& x_tilde);

/// x̃ − (JᵀJ + βI)⁻¹Jᵀ(A(x̃) − Ã(x̃)), solved matrix-free by CG.
Vector gauss_newton_step(const GaussNewtonStep& gn, const Vector& x_tilde);

/// x̃ + δx with (Σ JᵢᵀJᵢ + βI)δx = −Σ Jᵢᵀ(Aᵢ(x̃) − Ãᵢ(x̃)).
Vector gauss_newton_step_multisource(const std::vector<SourcePair>& sources, double beta,
                                     const Vector& x_tilde, const CgSettings& solver = {});

/// Σ ‖Aᵢ(x) − Ãᵢ(x̃)‖² + β‖x − x̃‖².
double proximal_objective(const std::vector<SourcePair>& sources, double beta, const Vector& x,
                          const Vector& x_tilde);

enum class LogDetMode { exact_small, eigen_delta };

LogDetMode parse_logdet_mode(const std::string& name);

inline constexpr Eigen::Index kExactLogDetMaxDim = 512;

/// Dense Jacobian of the exact model at x (output_dim × input_dim).
Matrix dense_jacobian(const NonlinearModel& model, const Vector& x);

/// log|det J_GN(x̃)| for J_GN = (1−δ)I + δβ(JᵀJ + βI)⁻¹, the small-residual
/// Jacobian of the Gauss–Newton map when Ã − A = δA.
double gn_log_jacobian_det(const GaussNewtonStep& gn, const Vector& x_tilde, LogDetMode mode,
                           double delta);
double gn_log_jacobian_det_multisource(const std::vector<SourcePair>& sources, double beta,
                                       const Vector& x_tilde, LogDetMode mode, double delta);

struct LogDetDiagnostics {
  Vector sorted_logdets;
  Vector pair_ratios;
  double q05 = 1.0;
  double q50 = 1.0;
  double q95 = 1.0;
};

/// Per-sample log-dets for the columns of `samples`, and determinant ratios
/// over `pairs` random pairs of distinct columns.
LogDetDiagnostics logdet_diagnostics(const GaussNewtonStep& gn, const Matrix& samples,
                                     Eigen::Index pairs, std::uint64_t seed, double delta,
                                     LogDetMode mode = LogDetMode::eigen_delta);

/// Linear-interpolation quantile of an unsorted sample.
double quantile(Vector values, double q);

}  // namespace pimh
