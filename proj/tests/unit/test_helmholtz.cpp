#include "proximh/helmholtz.hpp"
#include "proximh/oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace pimh;

namespace {

constexpr double kWave = 5.441398092702653;

Vector sample(const HelmholtzGrid& g, const std::function<double(double, double)>& f) {
  Vector v(g.size());
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j) v[i * g.n + j] = f(j * g.h, i * g.h);
  return v;
}

Vector varying_medium(const HelmholtzGrid& g, double contrast, std::uint64_t seed) {
  Rng rng = make_stream(seed);
  return (1.0 + contrast * standard_normal(rng, g.size()).array().tanh()).matrix();
}

std::shared_ptr<HelmholtzProblem> small_problem(int fine, int coarse, int param, int d_y, int sources) {
  HelmholtzSetup s;
  s.fine_n = fine;
  s.coarse_n = coarse;
  s.param_n = param;
  s.d_y = d_y;
  s.n_sources = sources;
  s.solver.tolerance = 1e-13;
  return std::make_shared<HelmholtzProblem>(make_helmholtz_problem(s));
}

}  // namespace

TEST_CASE("grid construction") {
  const auto g = make_grid(17, kWave);
  CHECK(std::abs(g.h * (g.n - 1) - 1.0) < 1e-14);
  CHECK_THROWS_AS(make_grid(2, kWave), ParameterError);
  CHECK_THROWS_AS(make_grid(8, 0.0), ParameterError);
}

TEST_CASE("helmholtz_matvec basics") {
  const auto g = make_grid(12, kWave);
  CHECK(helmholtz_matvec(g, Vector::Zero(g.size()), Vector::Constant(g.size(), 2.5)).cwiseAbs().maxCoeff() < 1e-10);

  Rng rng = make_stream(1);
  const Vector m = varying_medium(g, 0.3, 2);
  const Vector u = standard_normal(rng, g.size()), v = standard_normal(rng, g.size());
  const Vector lhs = helmholtz_matvec(g, m, 2.0 * u - 3.0 * v);
  const Vector rhs = 2.0 * helmholtz_matvec(g, m, u) - 3.0 * helmholtz_matvec(g, m, v);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12 * rhs.cwiseAbs().maxCoeff());

  CHECK(helmholtz_matvec(g, m, u) == helmholtz_matvec_serial(g, m, u));
  CHECK((assemble_helmholtz(g, m) * u - helmholtz_matvec(g, m, u)).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(helmholtz_matvec(g, m, Vector::Zero(3)), DimensionError);
}

TEST_CASE("helmholtz operator is self-adjoint under the quadrature weights") {
  const auto g = make_grid(10, kWave);
  const Vector m = varying_medium(g, 0.3, 3);
  const Vector w = quadrature_weights(g);
  Rng rng = make_stream(4);
  for (int i = 0; i < 5; ++i) {
    const Vector u = standard_normal(rng, g.size()), v = standard_normal(rng, g.size());
    const double a = w.cwiseProduct(helmholtz_matvec(g, m, u)).dot(v);
    const double b = w.cwiseProduct(u).dot(helmholtz_matvec(g, m, v));
    CHECK(std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(a)));
  }
}

TEST_CASE("discrete Laplacian converges at second order on a cosine mode") {
  std::vector<double> errors;
  for (int n : {9, 17, 33, 65}) {
    const auto g = make_grid(n, kWave);
    const Vector u = sample(g, [](double x, double y) { return std::cos(M_PI * x) * std::cos(M_PI * y); });
    const Vector lu = shifted_laplacian_apply(g, 0.0, u);
    errors.push_back((lu - 2.0 * M_PI * M_PI * u).cwiseAbs().maxCoeff());
  }
  for (std::size_t i = 1; i < errors.size(); ++i) {
    CHECK(errors[i - 1] / errors[i] == doctest::Approx(4.0).epsilon(0.15));
  }
}

TEST_CASE("cosine-transform preconditioner") {
  const auto g = make_grid(16, kWave);
  const double x_bar = 0.2;
  const double shift = kWave * kWave * (1.0 + x_bar);
  Rng rng = make_stream(5);
  const Vector w = standard_normal(rng, g.size());
  CHECK((dct_precondition(g, x_bar, shifted_laplacian_apply(g, shift, w)) - w).cwiseAbs().maxCoeff() < 1e-10);

  const Vector c = Vector::Constant(g.size(), 3.0);
  CHECK((dct_precondition(g, x_bar, c) - c / shift).cwiseAbs().maxCoeff() < 1e-14);

  Matrix dense = assemble_helmholtz(g, Vector::Zero(g.size()));
  dense.diagonal().array() += shift;
  const Vector v = standard_normal(rng, g.size());
  const Vector ref = dense.partialPivLu().solve(v);
  CHECK((dct_precondition(g, x_bar, v) - ref).norm() <= 1e-9 * ref.norm());

  // pick x̄ so that the shift cancels the smallest nonzero Laplacian eigenvalue
  const Vector lam = laplacian_eigenvalues(g);
  const double lam1 = lam[1];
  CHECK_THROWS_AS(dct_precondition(g, -lam1 / (kWave * kWave) - 1.0, v), ConditioningError);
}

TEST_CASE("gmres_solve") {
  SUBCASE("identity operator") {
    Rng rng = make_stream(6);
    const Vector b = standard_normal(rng, 30);
    const LinearMap id = [](const Vector& v) { return v; };
    const auto r = gmres_solve(id, nullptr, b);
    CHECK(r.iterations == 1);
    CHECK((r.x - b).norm() < 1e-12);
  }
  SUBCASE("exact preconditioner on a constant medium") {
    const auto g = make_grid(24, kWave);
    const double x_bar = 0.1;
    // M = −Δ + k²(1 + x̄) differs from L = −Δ − k²x̄, so solve M itself
    const double shift = kWave * kWave * (1.0 + x_bar);
    const LinearMap op = [&](const Vector& v) { return shifted_laplacian_apply(g, shift, v); };
    const LinearMap pre = [&](const Vector& v) { return dct_precondition(g, x_bar, v); };
    Rng rng = make_stream(7);
    const Vector b = standard_normal(rng, g.size());
    const auto r = gmres_solve(op, &pre, b, {1e-10, 50, 100});
    CHECK(r.iterations <= 3);
    CHECK((op(r.x) - b).norm() <= 1e-9 * b.norm());
  }
  SUBCASE("residual history is monotone within restart cycles") {
    const auto g = make_grid(20, kWave);
    const Vector m = varying_medium(g, 0.3, 8);
    const LinearMap op = [&](const Vector& v) { return helmholtz_matvec(g, m, v); };
    Rng rng = make_stream(9);
    const Vector b = standard_normal(rng, g.size());
    const GmresSettings s{1e-8, 20, 5000};
    const auto r = gmres_solve(op, nullptr, b, s);
    for (std::size_t i = 1; i < r.residual_history.size(); ++i) {
      if (i % static_cast<std::size_t>(s.restart) == 0) continue;
      CHECK(r.residual_history[i] <= r.residual_history[i - 1] * (1.0 + 1e-12));
    }
    CHECK_THROWS_AS(gmres_solve(op, nullptr, b, {1e-12, 5, 10}), SolverError);
  }
  SUBCASE("preconditioning reduces iterations on a varying medium") {
    const auto g = make_grid(64, 3.4 * M_PI);
    const Vector m = varying_medium(g, 0.3, 10);
    HelmholtzSolver pre(g, m, {1e-8, 50, 20000}, true);
    HelmholtzSolver plain(g, m, {1e-8, 50, 20000}, false);
    const Vector b = gaussian_source(g, 0.3, 0.6, 0.05);
    const auto a = pre.solve_with_history(b);
    const auto c = plain.solve_with_history(b);
    CHECK(a.iterations < c.iterations);
  }
}

TEST_CASE("HelmholtzSolver adjoint") {
  const auto g = make_grid(12, kWave);
  const Vector m = varying_medium(g, 0.3, 11);
  HelmholtzSolver s(g, m, {1e-13, 50, 2000});
  Rng rng = make_stream(12);
  const Vector b = standard_normal(rng, g.size()), c = standard_normal(rng, g.size());
  CHECK(std::abs(s.solve(b).dot(c) - b.dot(s.solve_adjoint(c))) <= 1e-9 * std::abs(s.solve(b).dot(c)) + 1e-12);
  const Matrix l = assemble_helmholtz(g, m);
  CHECK((l * s.solve(b) - b).norm() <= 1e-10 * b.norm());
}

TEST_CASE("Born operator") {
  const auto g = make_grid(16, kWave);
  const Vector x0 = varying_medium(g, 0.2, 13);
  const Vector f = gaussian_source(g, 0.4, 0.5, 0.08);
  const GmresSettings tight{1e-13, 50, 4000};
  const auto bg = born_background(g, x0, f, tight);
  CHECK(born_operator_apply(bg, Vector::Zero(g.size())).norm() == 0.0);

  Rng rng = make_stream(14);
  const Vector a = standard_normal(rng, g.size()), b = standard_normal(rng, g.size());
  const Vector lin = born_operator_apply(bg, 2.0 * a + b) - 2.0 * born_operator_apply(bg, a) - born_operator_apply(bg, b);
  CHECK(lin.norm() <= 1e-10 * born_operator_apply(bg, a).norm());

  // u(x) solves (−Δ − k²x)u = f, so δu = L⁻¹(k² δx ⊙ u0) and the remainder is O(t²)
  const Vector dx = sample(g, [](double x, double y) { return std::sin(2 * x) * std::cos(3 * y); });
  const Vector fdu = born_operator_apply(bg, dx);
  std::vector<double> ratios;
  for (double t : {1e-2, 5e-3, 2.5e-3}) {
    const Vector ut = HelmholtzSolver(g, x0 + t * dx, tight).solve(f);
    ratios.push_back((ut - bg.u0 - t * fdu).norm() / (t * t));
  }
  CHECK(ratios[1] == doctest::Approx(ratios[0]).epsilon(0.1));
  CHECK(ratios[2] == doctest::Approx(ratios[1]).epsilon(0.1));
}

TEST_CASE("prolongation") {
  const SparseMatrix same = prolongation(7, 7);
  CHECK((Matrix(same) - Matrix::Identity(49, 49)).cwiseAbs().maxCoeff() < 1e-14);

  const SparseMatrix p = prolongation(5, 13);
  CHECK((p * Vector::Constant(25, 1.7) - Vector::Constant(169, 1.7)).cwiseAbs().maxCoeff() < 1e-14);
  const auto coarse = make_grid(5, 1.0), fine = make_grid(13, 1.0);
  const auto linear = [](double x, double y) { return x + 2.0 * y + 0.5 * x * y; };
  CHECK((p * sample(coarse, linear) - sample(fine, linear)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(prolongation(9, 5), DimensionError);
}

TEST_CASE("nonlinear forward model") {
  auto prob = small_problem(16, 8, 4, 20, 2);
  const Vector x = Vector::Constant(prob->param_dim(), 1.0) + 0.1 * Vector::LinSpaced(prob->param_dim(), -1, 1);

  SUBCASE("dense oracle") {
    const auto r = nonlinear_forward(*prob, x, 0);
    const Vector medium = prob->p * x;
    const Vector u = assemble_helmholtz(prob->fine, medium).partialPivLu().solve(prob->sources[0]);
    CHECK((r.u - u).norm() <= 1e-8 * u.norm());
    CHECK((r.y - prob->observation * u).norm() <= 1e-8 * r.y.norm());
  }
  SUBCASE("zero source") {
    auto zero = *prob;
    zero.sources[0].setZero();
    const auto r = nonlinear_forward(zero, x, 0);
    CHECK(r.u.norm() == 0.0);
    CHECK(r.y.norm() == 0.0);
  }
  SUBCASE("finite-difference Jacobian and adjoint identity") {
    const auto lin = jacobian_products(prob, x, 1);
    Rng rng = make_stream(15);
    const Vector v = standard_normal(rng, prob->param_dim());
    const Vector w = standard_normal(rng, prob->obs_dim());
    CHECK(lin->jvp(Vector::Zero(prob->param_dim())).norm() == 0.0);
    CHECK(lin->vjp(Vector::Zero(prob->obs_dim())).norm() == 0.0);
    const double eps = 1e-6;
    const Vector fd = (nonlinear_forward(*prob, x + eps * v, 1).y - nonlinear_forward(*prob, x - eps * v, 1).y) / (2 * eps);
    const Vector jv = lin->jvp(v);
    CHECK((fd - jv).norm() <= 1e-5 * jv.norm());
    CHECK(std::abs(w.dot(jv) - lin->vjp(w).dot(v)) <= 1e-8 * std::abs(w.dot(jv)));
  }
  SUBCASE("misfit gradient") {
    std::vector<Vector> y{nonlinear_forward(*prob, x, 0).y, nonlinear_forward(*prob, x, 1).y};
    CHECK(misfit_gradient(prob, x, y).norm() < 1e-10);
    Rng rng = make_stream(16);
    for (auto& yi : y) yi += 0.1 * standard_normal(rng, yi.size());
    const Vector x1 = x + 0.05 * standard_normal(rng, x.size());
    const Vector grad = misfit_gradient(prob, x1, y);
    for (int c = 0; c < 4; ++c) {
      const Vector e = Vector::Unit(x.size(), 3 * c + 1);
      const double fd = oracle::central_difference([&](const Vector& z) { return misfit_value(*prob, z, y); }, x1, e, 1e-5);
      CHECK(std::abs(fd - grad[3 * c + 1]) <= 1e-5 * std::max(std::abs(fd), 1e-3 * grad.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("coarse model discrepancy shrinks with refinement") {
  auto lo = small_problem(33, 9, 5, 30, 1);
  auto hi = small_problem(33, 17, 5, 30, 1);
  const Vector x = Vector::Constant(lo->param_dim(), 1.0) + 0.1 * Vector::LinSpaced(lo->param_dim(), 0, 1);
  const Vector y = nonlinear_forward(*lo, x, 0).y;
  const double e_lo = (nonlinear_forward(*lo, x, 0, true).y - y).norm() / y.norm();
  const double e_hi = (nonlinear_forward(*hi, x, 0, true).y - y).norm() / y.norm();
  CHECK(e_hi < e_lo);
}

TEST_CASE("setup validation") {
  HelmholtzSetup s;
  s.coarse_n = 40;
  CHECK_THROWS_AS(make_helmholtz_problem(s), ConfigError);
  HelmholtzSetup t;
  t.n_sources = 5;
  CHECK_THROWS_AS(make_helmholtz_problem(t), ConfigError);
}
