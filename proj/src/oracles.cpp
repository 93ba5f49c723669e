#include "proximh/oracles.hpp"

#include "proximh/helmholtz.hpp"
#include "proximh/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace pimh::oracle {

Matrix imh_transition_matrix(const Vector& target, const Vector& proposal) {
  require_dims(target.size() == proposal.size(), "imh_transition_matrix: sizes differ");
  const Eigen::Index n = target.size();
  Matrix p = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double wi = target[i] / proposal[i];
    double off = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double wj = target[j] / proposal[j];
      p(i, j) = proposal[j] * std::min(1.0, wj / wi);
      off += p(i, j);
    }
    p(i, i) = 1.0 - off;
  }
  return p;
}

Vector propagate(const Matrix& p, const Vector& init, int n) {
  Vector row = init;
  for (int k = 0; k < n; ++k) row = (row.transpose() * p).transpose();
  return row;
}

double total_variation(const Vector& p, const Vector& q) {
  require_dims(p.size() == q.size(), "total_variation: sizes differ");
  return 0.5 * (p - q).cwiseAbs().sum();
}

DiscreteProposal::DiscreteProposal(Vector atoms, Vector probs) : atoms_(std::move(atoms)) {
  require_dims(atoms_.size() == probs.size(), "DiscreteProposal: sizes differ");
  cdf_.resize(probs.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) cdf_[i] = (acc += probs[i]);
  cdf_ /= acc;
}

ProposalDraw DiscreteProposal::draw(Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  Eigen::Index i = 0;
  while (i + 1 < cdf_.size() && u >= cdf_[i]) ++i;
  ProposalDraw d;
  d.x_tilde = Vector::Constant(1, atoms_[i]);
  d.x = d.x_tilde;
  d.index = i;
  return d;
}

KernelCheck imh_kernel_check(const Vector& atoms, const Vector& target, const Vector& proposal,
                             int n_steps, Eigen::Index replicas, std::uint64_t seed) {
  const Vector pi = target / target.sum();
  const Vector g = proposal / proposal.sum();
  KernelCheck out;
  out.exact = propagate(imh_transition_matrix(pi, g), g, n_steps);
  DiscreteProposal source(atoms, g);
  const LogWeight lw = [&](const ProposalDraw& d) { return std::log(pi[d.index]) - std::log(g[d.index]); };
  out.empirical = Vector::Zero(atoms.size());
  for (Eigen::Index r = 0; r < replicas; ++r) {
    const ChainRecord rec = imh_run(source, lw, n_steps, seed + static_cast<std::uint64_t>(r));
    const double x = rec.states(n_steps, 0);
    for (Eigen::Index i = 0; i < atoms.size(); ++i)
      if (x == atoms[i]) out.empirical[i] += 1.0;
  }
  out.empirical /= static_cast<double>(replicas);
  out.tv = total_variation(out.exact, out.empirical);
  return out;
}

namespace {

Eigen::Index bin_of(const Vector& edges, double x) {
  Eigen::Index b = 0;
  while (b < edges.size() && x > edges[b]) ++b;
  return b;
}

}  // namespace

KernelCheck mala_kernel_check(double h, double x0, int n_steps, const Vector& edges,
                              Eigen::Index replicas, std::uint64_t seed) {
  // quadrature nodes x_k = −L + kΔ; x0 must be a node and edges should sit
  // halfway between nodes
  const double span = 6.0 + std::abs(x0);
  const double delta = 0.004;
  const auto n = static_cast<Eigen::Index>(std::llround(2.0 * span / delta)) + 1;
  const Vector xs = Vector::LinSpaced(n, -span, span);
  const Eigen::Index start = std::llround((x0 + span) / delta);
  if (std::abs(xs[start] - x0) > 1e-9) throw ParameterError("mala_kernel_check: x0 is not a grid node");

  const auto log_pi = [](double x) { return -0.5 * x * x; };
  const auto drift = [h](double x) { return x - 0.5 * h * h * x; };
  const auto log_q = [h](double to, double mean) {
    return -0.5 * (to - mean) * (to - mean) / (h * h) - std::log(h * std::sqrt(2.0 * M_PI));
  };

  Vector dist = Vector::Zero(n);
  dist[start] = 1.0;
  for (int step = 0; step < n_steps; ++step) {
    Vector next = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (dist[i] == 0.0) continue;
      const double xi = xs[i];
      const double mi = drift(xi);
      double moved = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double xj = xs[j];
        const double wq = (j == 0 || j == n - 1) ? 0.5 * delta : delta;
        const double lq = log_q(xj, mi);
        const double la = std::min(0.0, log_pi(xj) + log_q(xi, drift(xj)) - log_pi(xi) - lq);
        const double pij = std::exp(lq + la) * wq;
        next[j] += dist[i] * pij;
        moved += pij;
      }
      next[i] += dist[i] * (1.0 - moved);
    }
    dist = next;
  }

  KernelCheck out;
  out.exact = Vector::Zero(edges.size() + 1);
  for (Eigen::Index k = 0; k < n; ++k) out.exact[bin_of(edges, xs[k])] += dist[k];

  const LogDensityGrad target = [](const Vector& x, Vector& g) {
    g = -x;
    return -0.5 * x.squaredNorm();
  };
  out.empirical = Vector::Zero(edges.size() + 1);
  const Vector init = Vector::Constant(1, x0);
  for (Eigen::Index r = 0; r < replicas; ++r) {
    const ChainRecord rec = mala_run(target, h, n_steps, seed + static_cast<std::uint64_t>(r), init);
    out.empirical[bin_of(edges, rec.states(n_steps, 0))] += 1.0;
  }
  out.empirical /= static_cast<double>(replicas);
  out.tv = total_variation(out.exact, out.empirical);
  return out;
}

double central_difference(const std::function<double(const Vector&)>& f, const Vector& x,
                          const Vector& direction, double eps) {
  return (f(x + eps * direction) - f(x - eps * direction)) / (2.0 * eps);
}

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, a, b);
  return buf;
}

}  // namespace

SuiteResult kl_suite(std::uint64_t seed) {
  SuiteResult res;
  Rng rng = make_stream(seed, 0);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Eigen::Index d = 1 + t % 20;
    const Eigen::Index dy = 1 + (t * 7) % d;
    const DiagonalSpec spec = random_diagonal_spec(d, dy, rng);
    const auto prob = diagonal_problem(spec);
    const auto k = build_k(prob.a, prob.a_tilde, spec.sigma * spec.sigma);
    const KLReport a = kl_diagonal(spec);
    const KLReport b = kl_gaussian_general(prob, k);
    worst = std::max({worst, std::abs(a.d_a - b.d_a), std::abs(a.d_l - b.d_l), std::abs(a.d_p - b.d_p)});
  }
  res.passed = worst <= 1e-8;
  res.lines.push_back(fmt("diagonal vs general: max abs err %.3e (tol 1e-8)", worst));

  double worst_z = 0.0;
  for (int t = 0; t < 10; ++t) {
    const auto ops = make_test_operator(PerturbationKind::multiplicative, 10, 6, {}, seed + 100 + t);
    auto prior = make_density(GaussianDensity{Vector::Zero(10), 1.0});
    const auto prob = make_linear_problem(ops.o, ops.f, ops.f_tilde, 0.3, prior, true, Vector::Zero(6));
    const auto k = build_k(prob.a, prob.a_tilde, 0.09);
    const KLReport g = kl_gaussian_general(prob, k);
    const MonteCarloKL mc = kl_monte_carlo(prob, k, 10000, seed + 200 + t);
    const double vals[3] = {g.d_a, g.d_l, g.d_p};
    for (int v = 0; v < 3; ++v) {
      worst_z = std::max(worst_z, std::abs(vals[v] - mc.estimates[v]) / std::max(mc.std_errors[v], 1e-300));
    }
  }
  const bool mc_ok = worst_z <= 3.0;
  res.passed = res.passed && mc_ok;
  res.lines.push_back(fmt("general vs Monte Carlo: max |z| %.3f (tol 3)", worst_z));
  return res;
}

SuiteResult gradient_suite(std::uint64_t seed) {
  SuiteResult res;
  HelmholtzSetup setup;
  setup.fine_n = 16;
  setup.coarse_n = 8;
  setup.param_n = 4;
  setup.d_y = 32;
  setup.n_sources = 2;
  setup.solver.tolerance = 1e-13;
  auto prob = std::make_shared<const HelmholtzProblem>(make_helmholtz_problem(setup));
  Rng rng = make_stream(seed, 0);
  const Vector x = Vector::Ones(prob->param_dim()) + 0.1 * standard_normal(rng, prob->param_dim());
  std::vector<Vector> y;
  for (int i = 0; i < setup.n_sources; ++i) {
    const Vector yi = nonlinear_forward(*prob, Vector::Ones(prob->param_dim()), i).y;
    y.push_back(yi + 0.01 * yi.norm() * standard_normal(rng, yi.size()) / std::sqrt(static_cast<double>(yi.size())));
  }
  const Vector grad = misfit_gradient(prob, x, y);
  const auto phi = [&](const Vector& z) { return misfit_value(*prob, z, y); };
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    Vector e = Vector::Zero(prob->param_dim());
    e[(t * 5 + 3) % prob->param_dim()] = 1.0;
    const double fd = central_difference(phi, x, e, 1e-5);
    worst = std::max(worst, std::abs(fd - grad.dot(e)) / std::max(std::abs(fd), 1e-12));
  }
  res.passed = worst <= 1e-5;
  res.lines.push_back(fmt("misfit gradient vs central differences: max rel err %.3e (tol 1e-5)", worst));

  const auto lin = jacobian_products(prob, x, 0);
  const Vector v = standard_normal(rng, prob->param_dim());
  const Vector w = standard_normal(rng, prob->obs_dim());
  const double lhs = w.dot(lin->jvp(v));
  const double rhs = lin->vjp(w).dot(v);
  const double adj = std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs));
  res.passed = res.passed && adj <= 1e-8;
  res.lines.push_back(fmt("adjoint identity <w, Jv> - <J^T w, v>: rel %.3e (tol 1e-8)", adj));
  return res;
}

SuiteResult kernel_suite(std::uint64_t seed) {
  SuiteResult res;
  Vector atoms(3), target(3), proposal(3);
  atoms << -1.0, 0.5, 2.0;
  target << 0.2, 0.5, 0.3;
  proposal << 0.5, 0.3, 0.2;
  const KernelCheck imh = imh_kernel_check(atoms, target, proposal, 3, 100000, seed);
  Vector edges(4);
  edges << -1.002, -0.302, 0.302, 1.002;
  const KernelCheck mala = mala_kernel_check(0.9, 1.5, 3, edges, 100000, seed + 1);
  res.passed = imh.tv <= 0.01 && mala.tv <= 0.01;
  res.lines.push_back(fmt("IMH 3-step law on 3 atoms: TV %.4f (tol 0.01)", imh.tv));
  res.lines.push_back(fmt("MALA 3-step law on 5 bins: TV %.4f (tol 0.01)", mala.tv));
  return res;
}

}  // namespace pimh::oracle
