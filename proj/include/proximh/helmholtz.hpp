#pragma once

#include "proximh/common.hpp"
#include "proximh/krylov.hpp"
#include "proximh/proximal.hpp"

#include <Eigen/Sparse>

#include <memory>

namespace pimh {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// n × n vertex grid on [0,1]² with spacing 1/(n−1). Vectors are row-major:
/// entry i·n + j sits at (x, y) = (j·h, i·h).
struct HelmholtzGrid {
  int n = 3;
  double h = 0.5;
  double k_wave = 1.0;

  Eigen::Index size() const { return static_cast<Eigen::Index>(n) * n; }
};

HelmholtzGrid make_grid(int n, double k_wave);

/// −Δ_h u + shift·u with the 5-point stencil and mirrored ghost points.
Vector shifted_laplacian_apply(const HelmholtzGrid& grid, double shift, const Vector& u);

/// (−Δ_h − k² diag(medium)) u. Parallel over grid rows for large grids.
Vector helmholtz_matvec(const HelmholtzGrid& grid, const Vector& medium, const Vector& u);
Vector helmholtz_matvec_serial(const HelmholtzGrid& grid, const Vector& medium, const Vector& u);

/// Dense matrix of the Helmholtz operator (small grids, for testing).
Matrix assemble_helmholtz(const HelmholtzGrid& grid, const Vector& medium);

/// Trapezoid weights under which the discrete operator is self-adjoint.
Vector quadrature_weights(const HelmholtzGrid& grid);

/// Eigenvalues of −Δ_h on the cosine modes: (2 − 2cos(πp/(n−1)) + 2 − 2cos(πq/(n−1)))/h².
Vector laplacian_eigenvalues(const HelmholtzGrid& grid);

/// M⁻¹v for M = −Δ_h + k²(1 + x̄) by a 2D cosine transform.
Vector dct_precondition(const HelmholtzGrid& grid, double x_bar, const Vector& v);

/// Linear solves with one medium on one grid.
class HelmholtzSolver {
 public:
  HelmholtzSolver(HelmholtzGrid grid, Vector medium, GmresSettings settings = {},
                  bool precondition = true);

  KrylovResult solve_with_history(const Vector& b) const;
  Vector solve(const Vector& b) const { return solve_with_history(b).x; }
  /// Solves Lᵀv = b through L⁻¹ and the quadrature weights.
  Vector solve_adjoint(const Vector& b) const;

  const HelmholtzGrid& grid() const { return grid_; }
  const Vector& medium() const { return medium_; }
  double mean_medium() const { return x_bar_; }

 private:
  HelmholtzGrid grid_;
  Vector medium_;
  GmresSettings settings_;
  bool precondition_;
  double x_bar_;
  Vector weights_;
};

/// Bilinear interpolation from one vertex grid onto a finer one.
SparseMatrix prolongation(int from_n, int to_n);

/// Point-sampling operator picking d_y uniformly spaced grid points.
SparseMatrix selection_operator(int n, int d_y);

/// Normalized Gaussian bump of the given width centered at (cx, cy).
Vector gaussian_source(const HelmholtzGrid& grid, double cx, double cy, double width);

struct HelmholtzSetup {
  int fine_n = 32;
  int coarse_n = 16;
  int param_n = 8;
  double k_wave = 5.441398092702653;  // √3·π
  int n_sources = 4;
  double source_width = 0.05;
  int d_y = 64;
  GmresSettings solver;
  bool precondition = true;
};

struct HelmholtzProblem {
  HelmholtzGrid fine;
  HelmholtzGrid coarse;
  int param_n = 8;
  std::vector<Vector> sources;         // on the fine grid
  std::vector<Vector> coarse_sources;  // same bumps sampled on the coarse grid
  SparseMatrix observation;            // d_y × fine
  SparseMatrix p;                      // param → fine
  SparseMatrix p_x;                    // param → coarse
  SparseMatrix p_u;                    // coarse → fine
  GmresSettings solver;
  bool precondition = true;

  Eigen::Index param_dim() const { return static_cast<Eigen::Index>(param_n) * param_n; }
  Eigen::Index obs_dim() const { return observation.rows(); }
};

HelmholtzProblem make_helmholtz_problem(const HelmholtzSetup& setup);

/// Cached background state for the Born operator F = L(x0)⁻¹ k² diag(u0).
struct BornBackground {
  std::shared_ptr<const HelmholtzSolver> solver;
  Vector u0;
};

BornBackground born_background(const HelmholtzGrid& grid, const Vector& x0, const Vector& f,
                               const GmresSettings& settings = {}, bool precondition = true);

/// δu = L(x0)⁻¹(k² δx ⊙ u0).
Vector born_operator_apply(const BornBackground& bg, const Vector& delta_x);

struct ForwardResult {
  Vector y;
  Vector u;  // wavefield on the solve grid
};

/// A_i(x) = O L(Px)⁻¹ f_i, or Ã_i(x) = O P_u L̃(P_x x)⁻¹ f̃_i when `coarse`.
ForwardResult nonlinear_forward(const HelmholtzProblem& prob, const Vector& x, int source_index,
                                bool coarse = false);

/// Forward model of one source as a NonlinearModel on the parameter grid.
ModelPtr make_helmholtz_model(std::shared_ptr<const HelmholtzProblem> prob, int source_index,
                              bool coarse);

/// Handles for J(x)·v and J(x)ᵀ·w of one source.
std::unique_ptr<Linearization> jacobian_products(std::shared_ptr<const HelmholtzProblem> prob,
                                                 const Vector& x, int source_index,
                                                 bool coarse = false);

/// Gradient of ½ Σ_i ‖A_i(x) − y_i‖² on the parameter grid.
Vector misfit_gradient(std::shared_ptr<const HelmholtzProblem> prob, const Vector& x,
                       const std::vector<Vector>& y_obs, bool coarse = false);
double misfit_value(const HelmholtzProblem& prob, const Vector& x, const std::vector<Vector>& y_obs,
                    bool coarse = false);

/// Dense O F P (fine) or O P_u F̃ P_x (coarse) Born operators at background x0
/// (parameter grid), column by column; parallel over columns.
Matrix born_dense_operator(const HelmholtzProblem& prob, const Vector& x0_param, int source_index,
                           bool coarse);

}  // namespace pimh
