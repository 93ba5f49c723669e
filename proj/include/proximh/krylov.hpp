#pragma once

#include "proximh/common.hpp"

#include <functional>

namespace pimh {

using LinearMap = std::function<Vector(const Vector&)>;

struct CgSettings {
  double tolerance = 1e-10;
  int max_iterations = 500;
};

struct KrylovResult {
  Vector x;
  int iterations = 0;
  std::vector<double> residual_history;  // relative residuals, one per iteration
};

/// Conjugate gradients for an SPD operator. Stops when ‖b − Ax‖/‖b‖ falls to
/// the tolerance; throws SolverError otherwise.
KrylovResult conjugate_gradient(const LinearMap& apply, const Vector& b,
                                const CgSettings& settings = {});

struct GmresSettings {
  double tolerance = 1e-10;
  int restart = 50;
  int max_iterations = 2000;
};

/// Restarted GMRES with optional left preconditioner. Convergence is measured
/// on the preconditioned residual ‖M⁻¹(b − Au)‖/‖M⁻¹b‖.
KrylovResult gmres_solve(const LinearMap& apply, const LinearMap* precondition, const Vector& b,
                         const GmresSettings& settings = {});

}  // namespace pimh
