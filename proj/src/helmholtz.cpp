#include "proximh/helmholtz.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace pimh {

HelmholtzGrid make_grid(int n, double k_wave) {
  if (n < 3) throw ParameterError("Helmholtz grid needs at least 3 points per side");
  if (!(k_wave > 0)) throw ParameterError("Helmholtz wavenumber must be positive");
  return {n, 1.0 / static_cast<double>(n - 1), k_wave};
}

namespace {

void check_grid_vector(const HelmholtzGrid& grid, const Vector& v, const char* what) {
  require_dims(v.size() == grid.size(), std::string(what) + ": length must be n²");
}

// Row r of (−Δ_h + shift − k² medium) u, with mirrored ghosts.
inline void stencil_row(int n, double inv_h2, double shift, double k2, const double* medium,
                        const double* u, double* out, int r) {
  const int up = r == 0 ? 1 : r - 1;
  const int dn = r == n - 1 ? n - 2 : r + 1;
  const double* row = u + static_cast<std::ptrdiff_t>(r) * n;
  const double* row_up = u + static_cast<std::ptrdiff_t>(up) * n;
  const double* row_dn = u + static_cast<std::ptrdiff_t>(dn) * n;
  for (int c = 0; c < n; ++c) {
    const int lf = c == 0 ? 1 : c - 1;
    const int rt = c == n - 1 ? n - 2 : c + 1;
    const double lap = (4.0 * row[c] - row[lf] - row[rt] - row_up[c] - row_dn[c]) * inv_h2;
    const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(r) * n + c;
    double v = lap + shift * row[c];
    if (medium) v -= k2 * medium[k] * row[c];
    out[k] = v;
  }
}

}  // namespace

Vector shifted_laplacian_apply(const HelmholtzGrid& grid, double shift, const Vector& u) {
  check_grid_vector(grid, u, "shifted_laplacian_apply");
  Vector out(u.size());
  const double inv_h2 = 1.0 / (grid.h * grid.h);
  for (int r = 0; r < grid.n; ++r) stencil_row(grid.n, inv_h2, shift, 0.0, nullptr, u.data(), out.data(), r);
  return out;
}

Vector helmholtz_matvec_serial(const HelmholtzGrid& grid, const Vector& medium, const Vector& u) {
  check_grid_vector(grid, u, "helmholtz_matvec");
  check_grid_vector(grid, medium, "helmholtz_matvec");
  Vector out(u.size());
  const double inv_h2 = 1.0 / (grid.h * grid.h);
  const double k2 = grid.k_wave * grid.k_wave;
  for (int r = 0; r < grid.n; ++r) stencil_row(grid.n, inv_h2, 0.0, k2, medium.data(), u.data(), out.data(), r);
  return out;
}

Vector helmholtz_matvec(const HelmholtzGrid& grid, const Vector& medium, const Vector& u) {
  check_grid_vector(grid, u, "helmholtz_matvec");
  check_grid_vector(grid, medium, "helmholtz_matvec");
  Vector out(u.size());
  const double inv_h2 = 1.0 / (grid.h * grid.h);
  const double k2 = grid.k_wave * grid.k_wave;
  const int n = grid.n;
#pragma omp parallel for schedule(static) if (n >= 128)
  for (int r = 0; r < n; ++r) stencil_row(n, inv_h2, 0.0, k2, medium.data(), u.data(), out.data(), r);
  return out;
}

Matrix assemble_helmholtz(const HelmholtzGrid& grid, const Vector& medium) {
  const Eigen::Index m = grid.size();
  if (m > 4096) throw CapacityError("assemble_helmholtz: grid too large for dense assembly");
  Matrix out(m, m);
  Vector e = Vector::Zero(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    e[j] = 1.0;
    out.col(j) = helmholtz_matvec_serial(grid, medium, e);
    e[j] = 0.0;
  }
  return out;
}

Vector quadrature_weights(const HelmholtzGrid& grid) {
  Vector w1 = Vector::Ones(grid.n);
  w1[0] = w1[grid.n - 1] = 0.5;
  Vector w(grid.size());
  for (int r = 0; r < grid.n; ++r)
    for (int c = 0; c < grid.n; ++c) w[static_cast<Eigen::Index>(r) * grid.n + c] = w1[r] * w1[c];
  return w;
}

Vector laplacian_eigenvalues(const HelmholtzGrid& grid) {
  const int n = grid.n;
  Vector l1(n);
  const double inv_h2 = 1.0 / (grid.h * grid.h);
  for (int p = 0; p < n; ++p) {
    l1[p] = (2.0 - 2.0 * std::cos(std::numbers::pi * p / static_cast<double>(n - 1))) * inv_h2;
  }
  Vector lam(grid.size());
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q) lam[static_cast<Eigen::Index>(p) * n + q] = l1[p] + l1[q];
  return lam;
}

namespace {

// FFTW planning is not thread-safe; plans are created once per size under a
// lock and executed through the new-array interface.
fftw_plan dct1_plan(int n) {
  static std::mutex mutex;
  static std::map<int, fftw_plan> plans;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  double* buf = fftw_alloc_real(static_cast<std::size_t>(n) * n);
  fftw_plan plan = fftw_plan_r2r_2d(n, n, buf, buf, FFTW_REDFT00, FFTW_REDFT00,
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(buf);
  if (!plan) throw NumericalError("FFTW could not plan a cosine transform");
  plans.emplace(n, plan);
  return plan;
}

}  // namespace

Vector dct_precondition(const HelmholtzGrid& grid, double x_bar, const Vector& v) {
  check_grid_vector(grid, v, "dct_precondition");
  const int n = grid.n;
  const double shift = grid.k_wave * grid.k_wave * (1.0 + x_bar);
  const Vector lam = laplacian_eigenvalues(grid);
  const double scale = lam.maxCoeff() + std::abs(shift);
  for (Eigen::Index m = 0; m < lam.size(); ++m) {
    if (std::abs(lam[m] + shift) <= 1e-13 * scale) {
      throw ConditioningError("dct_precondition: shifted operator is singular at mode (" +
                                  std::to_string(m / n) + ", " + std::to_string(m % n) + ")",
                              std::abs(lam[m] + shift));
    }
  }
  fftw_plan plan = dct1_plan(n);
  Vector coeff(v.size());
  Vector work = v;
  fftw_execute_r2r(plan, work.data(), coeff.data());
  const double norm = 4.0 * static_cast<double>(n - 1) * static_cast<double>(n - 1);
  for (Eigen::Index m = 0; m < coeff.size(); ++m) coeff[m] /= (lam[m] + shift) * norm;
  Vector out(v.size());
  fftw_execute_r2r(plan, coeff.data(), out.data());
  return out;
}

HelmholtzSolver::HelmholtzSolver(HelmholtzGrid grid, Vector medium, GmresSettings settings,
                                 bool precondition)
    : grid_(grid),
      medium_(std::move(medium)),
      settings_(settings),
      precondition_(precondition),
      x_bar_(0.0),
      weights_(quadrature_weights(grid_)) {
  check_grid_vector(grid_, medium_, "HelmholtzSolver");
  if (!medium_.allFinite()) throw ParameterError("HelmholtzSolver: medium has non-finite entries");
  x_bar_ = medium_.mean();
}

KrylovResult HelmholtzSolver::solve_with_history(const Vector& b) const {
  check_grid_vector(grid_, b, "HelmholtzSolver::solve");
  const LinearMap op = [this](const Vector& u) { return helmholtz_matvec(grid_, medium_, u); };
  if (!precondition_) return gmres_solve(op, nullptr, b, settings_);
  const LinearMap prec = [this](const Vector& v) { return dct_precondition(grid_, x_bar_, v); };
  return gmres_solve(op, &prec, b, settings_);
}

Vector HelmholtzSolver::solve_adjoint(const Vector& b) const {
  check_grid_vector(grid_, b, "HelmholtzSolver::solve_adjoint");
  return weights_.cwiseProduct(solve(b.cwiseQuotient(weights_)));
}

SparseMatrix prolongation(int from_n, int to_n) {
  if (from_n < 2 || to_n < 2) throw DimensionError("prolongation: grids need at least 2 points per side");
  if (from_n > to_n) throw DimensionError("prolongation: source grid must not be finer than target");
  // 1D weights: fine index j sits at coarse coordinate j(from−1)/(to−1)
  struct Tap {
    int lo;
    double w_lo;
    double w_hi;
  };
  std::vector<Tap> taps(static_cast<std::size_t>(to_n));
  const int num = from_n - 1;
  const int den = to_n - 1;
  for (int j = 0; j < to_n; ++j) {
    int lo = (j * num) / den;
    int rem = (j * num) % den;
    if (lo == from_n - 1) {
      lo = from_n - 2;
      rem = den;
    }
    const double frac = static_cast<double>(rem) / static_cast<double>(den);
    taps[static_cast<std::size_t>(j)] = {lo, 1.0 - frac, frac};
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(to_n) * to_n * 4);
  for (int r = 0; r < to_n; ++r) {
    const Tap& ty = taps[static_cast<std::size_t>(r)];
    for (int c = 0; c < to_n; ++c) {
      const Tap& tx = taps[static_cast<std::size_t>(c)];
      const int row = r * to_n + c;
      const int rows[2] = {ty.lo, ty.lo + 1};
      const double wy[2] = {ty.w_lo, ty.w_hi};
      const int cols[2] = {tx.lo, tx.lo + 1};
      const double wx[2] = {tx.w_lo, tx.w_hi};
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const double w = wy[a] * wx[b];
          if (w != 0.0) trips.emplace_back(row, rows[a] * from_n + cols[b], w);
        }
    }
  }
  SparseMatrix p(static_cast<Eigen::Index>(to_n) * to_n, static_cast<Eigen::Index>(from_n) * from_n);
  p.setFromTriplets(trips.begin(), trips.end());
  return p;
}

SparseMatrix selection_operator(int n, int d_y) {
  const Eigen::Index m = static_cast<Eigen::Index>(n) * n;
  if (d_y < 1 || d_y > m) throw DimensionError("selection_operator: need 1 ≤ d_y ≤ n²");
  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < d_y; ++k) {
    const auto idx = static_cast<Eigen::Index>((static_cast<double>(k) + 0.5) * static_cast<double>(m) / d_y);
    trips.emplace_back(k, std::min(idx, m - 1), 1.0);
  }
  SparseMatrix o(d_y, m);
  o.setFromTriplets(trips.begin(), trips.end());
  return o;
}

Vector gaussian_source(const HelmholtzGrid& grid, double cx, double cy, double width) {
  if (!(width > 0)) throw ParameterError("gaussian_source: width must be positive");
  Vector f(grid.size());
  const double norm = 1.0 / (2.0 * std::numbers::pi * width * width);
  for (int r = 0; r < grid.n; ++r) {
    for (int c = 0; c < grid.n; ++c) {
      const double dx = c * grid.h - cx;
      const double dy = r * grid.h - cy;
      f[static_cast<Eigen::Index>(r) * grid.n + c] =
          norm * std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
    }
  }
  return f;
}

HelmholtzProblem make_helmholtz_problem(const HelmholtzSetup& s) {
  if (s.coarse_n > s.fine_n || s.param_n > s.coarse_n) {
    throw ConfigError("Helmholtz grids must satisfy param ≤ coarse ≤ fine");
  }
  if (s.n_sources < 1 || s.n_sources > 4) throw ConfigError("Helmholtz setup supports 1 to 4 sources");
  HelmholtzProblem p;
  p.fine = make_grid(s.fine_n, s.k_wave);
  p.coarse = make_grid(s.coarse_n, s.k_wave);
  p.param_n = s.param_n;
  const double centers[4][2] = {{0.25, 0.25}, {0.75, 0.25}, {0.25, 0.75}, {0.75, 0.75}};
  for (int i = 0; i < s.n_sources; ++i) {
    p.sources.push_back(gaussian_source(p.fine, centers[i][0], centers[i][1], s.source_width));
    p.coarse_sources.push_back(gaussian_source(p.coarse, centers[i][0], centers[i][1], s.source_width));
  }
  p.observation = selection_operator(s.fine_n, s.d_y);
  p.p = prolongation(s.param_n, s.fine_n);
  p.p_x = prolongation(s.param_n, s.coarse_n);
  p.p_u = prolongation(s.coarse_n, s.fine_n);
  p.solver = s.solver;
  p.precondition = s.precondition;
  return p;
}

BornBackground born_background(const HelmholtzGrid& grid, const Vector& x0, const Vector& f,
                               const GmresSettings& settings, bool precondition) {
  BornBackground bg;
  bg.solver = std::make_shared<HelmholtzSolver>(grid, x0, settings, precondition);
  bg.u0 = bg.solver->solve(f);
  return bg;
}

Vector born_operator_apply(const BornBackground& bg, const Vector& delta_x) {
  const auto& grid = bg.solver->grid();
  check_grid_vector(grid, delta_x, "born_operator_apply");
  const double k2 = grid.k_wave * grid.k_wave;
  return bg.solver->solve(k2 * delta_x.cwiseProduct(bg.u0));
}

namespace {

void check_source(const HelmholtzProblem& prob, int source_index) {
  if (source_index < 0 || static_cast<std::size_t>(source_index) >= prob.sources.size()) {
    throw DimensionError("Helmholtz: source index out of range");
  }
}

class HelmholtzLinearization final : public Linearization {
 public:
  HelmholtzLinearization(std::shared_ptr<const HelmholtzProblem> prob, const Vector& x, int source,
                         bool coarse)
      : prob_(std::move(prob)), coarse_(coarse) {
    check_source(*prob_, source);
    require_dims(x.size() == prob_->param_dim(), "Helmholtz model: parameter has wrong dimension");
    const auto& grid = coarse_ ? prob_->coarse : prob_->fine;
    const SparseMatrix& p = coarse_ ? prob_->p_x : prob_->p;
    solver_ = std::make_unique<HelmholtzSolver>(grid, p * x, prob_->solver, prob_->precondition);
    const Vector& f = coarse_ ? prob_->coarse_sources[source] : prob_->sources[source];
    u_ = solver_->solve(f);
    value_ = observe(u_);
  }

  const Vector& value() const override { return value_; }
  const Vector& wavefield() const { return u_; }

  Vector jvp(const Vector& v) const override {
    require_dims(v.size() == prob_->param_dim(), "Helmholtz jvp: direction has wrong dimension");
    const SparseMatrix& p = coarse_ ? prob_->p_x : prob_->p;
    const double k2 = solver_->grid().k_wave * solver_->grid().k_wave;
    const Vector dm = p * v;
    return observe(solver_->solve(k2 * dm.cwiseProduct(u_)));
  }

  Vector vjp(const Vector& w) const override {
    require_dims(w.size() == prob_->obs_dim(), "Helmholtz vjp: cotangent has wrong dimension");
    const SparseMatrix& p = coarse_ ? prob_->p_x : prob_->p;
    const double k2 = solver_->grid().k_wave * solver_->grid().k_wave;
    Vector b = prob_->observation.transpose() * w;
    if (coarse_) b = prob_->p_u.transpose() * b;
    const Vector v = solver_->solve_adjoint(b);
    return p.transpose() * (k2 * u_.cwiseProduct(v));
  }

 private:
  Vector observe(const Vector& u) const {
    if (coarse_) return prob_->observation * (prob_->p_u * u);
    return prob_->observation * u;
  }

  std::shared_ptr<const HelmholtzProblem> prob_;
  bool coarse_;
  std::unique_ptr<HelmholtzSolver> solver_;
  Vector u_;
  Vector value_;
};

class HelmholtzModel final : public NonlinearModel {
 public:
  HelmholtzModel(std::shared_ptr<const HelmholtzProblem> prob, int source, bool coarse)
      : prob_(std::move(prob)), source_(source), coarse_(coarse) {
    check_source(*prob_, source_);
  }
  Eigen::Index input_dim() const override { return prob_->param_dim(); }
  Eigen::Index output_dim() const override { return prob_->obs_dim(); }
  std::unique_ptr<Linearization> linearize(const Vector& x) const override {
    return std::make_unique<HelmholtzLinearization>(prob_, x, source_, coarse_);
  }

 private:
  std::shared_ptr<const HelmholtzProblem> prob_;
  int source_;
  bool coarse_;
};

}  // namespace

ForwardResult nonlinear_forward(const HelmholtzProblem& prob, const Vector& x, int source_index,
                                bool coarse) {
  // non-owning alias; the linearization does not outlive this call
  std::shared_ptr<const HelmholtzProblem> alias(std::shared_ptr<const HelmholtzProblem>(), &prob);
  HelmholtzLinearization lin(alias, x, source_index, coarse);
  return {lin.value(), lin.wavefield()};
}

ModelPtr make_helmholtz_model(std::shared_ptr<const HelmholtzProblem> prob, int source_index,
                              bool coarse) {
  return std::make_shared<HelmholtzModel>(std::move(prob), source_index, coarse);
}

std::unique_ptr<Linearization> jacobian_products(std::shared_ptr<const HelmholtzProblem> prob,
                                                 const Vector& x, int source_index, bool coarse) {
  return std::make_unique<HelmholtzLinearization>(std::move(prob), x, source_index, coarse);
}

Vector misfit_gradient(std::shared_ptr<const HelmholtzProblem> prob, const Vector& x,
                       const std::vector<Vector>& y_obs, bool coarse) {
  require_dims(y_obs.size() == prob->sources.size(), "misfit_gradient: need one observation per source");
  Vector grad = Vector::Zero(prob->param_dim());
  for (std::size_t i = 0; i < y_obs.size(); ++i) {
    HelmholtzLinearization lin(prob, x, static_cast<int>(i), coarse);
    grad += lin.vjp(lin.value() - y_obs[i]);
  }
  return grad;
}

double misfit_value(const HelmholtzProblem& prob, const Vector& x, const std::vector<Vector>& y_obs,
                    bool coarse) {
  require_dims(y_obs.size() == prob.sources.size(), "misfit_value: need one observation per source");
  double total = 0.0;
  for (std::size_t i = 0; i < y_obs.size(); ++i) {
    total += 0.5 * (nonlinear_forward(prob, x, static_cast<int>(i), coarse).y - y_obs[i]).squaredNorm();
  }
  return total;
}

Matrix born_dense_operator(const HelmholtzProblem& prob, const Vector& x0_param, int source_index,
                           bool coarse) {
  std::shared_ptr<const HelmholtzProblem> alias(std::shared_ptr<const HelmholtzProblem>(), &prob);
  HelmholtzLinearization lin(alias, x0_param, source_index, coarse);
  const Eigen::Index d = prob.param_dim();
  Matrix out(prob.obs_dim(), d);
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index j = 0; j < d; ++j) {
    Vector e = Vector::Zero(d);
    e[j] = 1.0;
    out.col(j) = lin.jvp(e);
  }
  return out;
}

}  // namespace pimh
