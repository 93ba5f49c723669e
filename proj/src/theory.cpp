#include "proximh/theory.hpp"

#include <cmath>
#include <limits>

namespace pimh {

double DiagonalSpec::rho(Eigen::Index i) const {
  const double s2 = s[i] * s[i];
  const double v = sigma * sigma;
  return (alpha[i] * alpha[i] * s2 + v) / (s2 + v);
}

double DiagonalSpec::zeta(Eigen::Index i) const {
  const double q = alpha[i] * alpha[i] * s[i] * s[i] + sigma * sigma;
  return 1.0 / (q * q);
}

double DiagonalSpec::rho_proximal(Eigen::Index i) const {
  const double s2 = s[i] * s[i];
  const double v = sigma * sigma;
  const double num = alpha[i] * s2 + v;
  return num * num / ((s2 + v) * (alpha[i] * alpha[i] * s2 + v));
}

void validate(const DiagonalSpec& spec) {
  require_dims(spec.d_y() >= 1 && spec.d_y() <= spec.d(), "DiagonalSpec: need 1 ≤ d_y ≤ d");
  if (!(spec.sigma > 0) || !(spec.s.array() > 0).all() || !(spec.alpha.array() > 0).all()) {
    throw ParameterError("DiagonalSpec: s, alpha and sigma must be positive");
  }
}

DiagonalSpec random_diagonal_spec(Eigen::Index d, Eigen::Index d_y, Rng& rng) {
  require_dims(d_y >= 1 && d_y <= d, "random_diagonal_spec: need 1 ≤ d_y ≤ d");
  std::uniform_real_distribution<double> us(0.2, 3.0), ua(0.5, 1.5), usig(0.1, 1.5);
  DiagonalSpec spec;
  spec.s.resize(d_y);
  spec.alpha.resize(d);
  for (Eigen::Index i = 0; i < d_y; ++i) spec.s[i] = us(rng);
  for (Eigen::Index i = 0; i < d; ++i) spec.alpha[i] = ua(rng);
  spec.sigma = usig(rng);
  return spec;
}

KLReport kl_diagonal(const DiagonalSpec& spec) {
  validate(spec);
  const double v = spec.sigma * spec.sigma;
  KLReport r;
  for (Eigen::Index i = 0; i < spec.d_y(); ++i) {
    const double a = spec.alpha[i];
    const double s2 = spec.s[i] * spec.s[i];
    const double rho = spec.rho(i);
    const double zeta = spec.zeta(i);
    const double rp = spec.rho_proximal(i);

    r.approx.covariance_mismatch += 1.0 / rho - 1.0 + std::log(rho);
    const double t = a * s2 - v;
    r.approx.mean_mismatch += zeta * (a - 1) * (a - 1) * t * t * s2 / v;

    r.latent.covariance_mismatch += a * a / rho - 1.0 + std::log(rho / (a * a));
    r.latent.mean_mismatch += zeta * (a * a - 1) * (a * a - 1) * s2 * v;

    r.proximal.covariance_mismatch += rp - 1.0 - std::log(rp);
    r.proximal.mean_mismatch += zeta * (a - 1) * (a - 1) * s2 * v;
  }
  for (Eigen::Index i = spec.d_y(); i < spec.d(); ++i) {
    const double a2 = spec.alpha[i] * spec.alpha[i];
    r.latent.covariance_mismatch += a2 - 1.0 - std::log(a2);
  }
  r.d_a = r.approx.total();
  r.d_l = r.latent.total();
  r.d_p = r.proximal.total();
  return r;
}

LinearInverseProblem diagonal_problem(const DiagonalSpec& spec) {
  validate(spec);
  const Eigen::Index d = spec.d();
  const Eigen::Index dy = spec.d_y();
  Matrix o = Matrix::Zero(dy, d);
  o.leftCols(dy).setIdentity();
  Vector diag = Vector::Ones(d);
  diag.head(dy) = spec.s;
  Matrix f = diag.asDiagonal();
  Matrix ft = diag.cwiseProduct(spec.alpha).asDiagonal();
  auto prior = make_density(GaussianDensity{Vector::Zero(d), 1.0});
  return make_linear_problem(std::move(o), std::move(f), std::move(ft), spec.sigma, prior, true,
                             Vector::Zero(dy));
}

namespace {

double log_det_spd(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success) {
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -1e-10 * scale) throw ConditioningError("covariance is not positive semidefinite", ev.minCoeff());
  if (ev.minCoeff() <= 0) throw ConditioningError("covariance is singular", 0.0);
  return ev.array().log().sum();
}

// Pieces of the exact posterior shared by all variants.
struct ExactPieces {
  Matrix a;
  double sigma2;
  Matrix mean_map;
  Matrix precision;  // Σ⁻¹ = I + AᵀA/σ²
  double log_det_cov;
};

ExactPieces exact_pieces(const LinearInverseProblem& prob) {
  const auto form = gaussian_posterior_form(PosteriorKind::exact, prob, nullptr);
  ExactPieces e;
  e.a = prob.a;
  e.sigma2 = prob.sigma * prob.sigma;
  e.mean_map = form.mean_map;
  e.precision = prob.a.transpose() * prob.a / e.sigma2;
  e.precision.diagonal().array() += 1.0;
  e.log_det_cov = -log_det_spd(e.precision);
  return e;
}

double covariance_term(const ExactPieces& e, const Matrix& cov_v) {
  const double trace = e.precision.cwiseProduct(cov_v).sum();
  return e.log_det_cov - log_det_spd(cov_v) + trace - static_cast<double>(cov_v.rows());
}

double mean_term(const ExactPieces& e, const Matrix& delta) {
  const Matrix ad = e.a * delta;
  const Matrix da = delta * e.a;
  return (ad * e.a).squaredNorm() / e.sigma2 + e.sigma2 * delta.squaredNorm() + ad.squaredNorm() +
         da.squaredNorm();
}

KLTerms variant_terms(const ExactPieces& e, const GaussianPosteriorForm& f) {
  return {covariance_term(e, f.covariance), mean_term(e, f.mean_map - e.mean_map)};
}

}  // namespace

KLReport kl_gaussian_general(const LinearInverseProblem& prob, const CorrectionOperatorK& k) {
  const ExactPieces e = exact_pieces(prob);
  KLReport r;
  r.approx = variant_terms(e, gaussian_posterior_form(PosteriorKind::approx, prob, nullptr));
  r.proximal = variant_terms(e, gaussian_posterior_form(PosteriorKind::proximal, prob, &k));
  if (prob.has_latent()) {
    r.latent = variant_terms(e, gaussian_posterior_form(PosteriorKind::latent, prob, nullptr));
  } else {
    r.latent = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  }
  r.d_a = r.approx.total();
  r.d_l = r.latent.total();
  r.d_p = r.proximal.total();
  return r;
}

double stable_sum(const double* values, std::size_t n, std::size_t stride) {
  double sum = 0.0;
  double comp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = values[i * stride];
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

namespace {

struct McSetup {
  ExactPieces exact;
  std::array<Matrix, 3> mean_maps;
  std::array<double, 3> cov_terms{};
  std::array<bool, 3> active{};
};

McSetup mc_setup(const LinearInverseProblem& prob, const CorrectionOperatorK& k) {
  McSetup s{exact_pieces(prob), {}, {}, {}};
  const PosteriorKind kinds[3] = {PosteriorKind::approx, PosteriorKind::latent,
                                  PosteriorKind::proximal};
  for (int v = 0; v < 3; ++v) {
    if (kinds[v] == PosteriorKind::latent && !prob.has_latent()) continue;
    const auto f = gaussian_posterior_form(kinds[v], prob, &k);
    s.mean_maps[v] = f.mean_map - s.exact.mean_map;
    s.cov_terms[v] = covariance_term(s.exact, f.covariance);
    s.active[v] = true;
  }
  return s;
}

// Per-draw mean-mismatch values for draw i, written into out[0..2].
void mc_draw(const McSetup& s, std::uint64_t seed, Eigen::Index i, double* out) {
  Rng rng = make_stream(seed, static_cast<std::uint64_t>(i));
  const Eigen::Index d = s.exact.a.cols();
  const Eigen::Index dy = s.exact.a.rows();
  const Vector x0 = standard_normal(rng, d);
  const Vector y = s.exact.a * x0 + std::sqrt(s.exact.sigma2) * standard_normal(rng, dy);
  for (int v = 0; v < 3; ++v) {
    if (!s.active[v]) {
      out[v] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const Vector delta = s.mean_maps[v] * y;
    out[v] = delta.squaredNorm() + (s.exact.a * delta).squaredNorm() / s.exact.sigma2;
  }
}

MonteCarloKL mc_reduce(const McSetup& s, const std::vector<double>& values, Eigen::Index n) {
  MonteCarloKL r;
  const auto nn = static_cast<std::size_t>(n);
  for (int v = 0; v < 3; ++v) {
    if (!s.active[v]) {
      r.estimates[v] = r.std_errors[v] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double mean = stable_sum(values.data() + v, nn, 3) / static_cast<double>(n);
    std::vector<double> sq(nn);
    for (std::size_t i = 0; i < nn; ++i) {
      const double dv = values[3 * i + v] - mean;
      sq[i] = dv * dv;
    }
    const double var = n > 1 ? stable_sum(sq.data(), nn) / static_cast<double>(n - 1) : 0.0;
    r.estimates[v] = s.cov_terms[v] + mean;
    r.std_errors[v] = std::sqrt(var / static_cast<double>(n));
  }
  return r;
}

}  // namespace

MonteCarloKL kl_monte_carlo_serial(const LinearInverseProblem& prob, const CorrectionOperatorK& k,
                                   Eigen::Index n_y, std::uint64_t seed) {
  if (n_y < 1) throw ParameterError("kl_monte_carlo: n_y must be positive");
  const McSetup s = mc_setup(prob, k);
  std::vector<double> values(3 * static_cast<std::size_t>(n_y));
  for (Eigen::Index i = 0; i < n_y; ++i) mc_draw(s, seed, i, values.data() + 3 * i);
  return mc_reduce(s, values, n_y);
}

MonteCarloKL kl_monte_carlo(const LinearInverseProblem& prob, const CorrectionOperatorK& k,
                            Eigen::Index n_y, std::uint64_t seed) {
  if (n_y < 1) throw ParameterError("kl_monte_carlo: n_y must be positive");
  const McSetup s = mc_setup(prob, k);
  std::vector<double> values(3 * static_cast<std::size_t>(n_y));
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n_y; ++i) mc_draw(s, seed, i, values.data() + 3 * i);
  return mc_reduce(s, values, n_y);
}

MixingQuantities mixing_quantities(const LinearInverseProblem& prob, const CorrectionOperatorK& k) {
  MixingQuantities q;
  const Eigen::Index d = prob.dim();
  const Matrix delta = prob.a_tilde - prob.a;
  q.approx_q = spectral_norm(prob.a.transpose() * delta) / (prob.sigma * prob.sigma);
  if (prob.has_latent()) {
    q.latent_q = spectral_norm(Matrix::Identity(d, d) - latent_map(prob));
  } else {
    q.latent_q = std::numeric_limits<double>::quiet_NaN();
  }
  q.proximal_q = spectral_norm(Matrix::Identity(d, d) - k.k_inverse);
  return q;
}

std::array<double, 3> kl_leading_order(const DiagonalSpec& spec, double epsilon) {
  validate(spec);
  const double e2 = epsilon * epsilon;
  const double v = spec.sigma * spec.sigma;
  double sum_snr = 0.0;
  double sum_inv = 0.0;
  for (Eigen::Index i = 0; i < spec.d_y(); ++i) {
    const double s2 = spec.s[i] * spec.s[i];
    sum_snr += s2 / v;
    sum_inv += v / s2;
  }
  const auto dy = static_cast<double>(spec.d_y());
  const auto d = static_cast<double>(spec.d());
  return {e2 * dy + e2 * sum_snr, e2 * d + e2 * sum_inv, e2 * dy + e2 * sum_inv};
}

KlSweepInstance make_kl_sweep_instance(Eigen::Index d, Eigen::Index d_y, double log10_snr,
                                       double operator_error, std::uint64_t seed) {
  require_dims(d >= 1 && d_y >= 1 && d_y <= d, "kl sweep: need 1 ≤ d_y ≤ d");
  if (!(operator_error >= 0)) throw ParameterError("kl sweep: operator error must be nonnegative");
  Rng rng = make_stream(seed, 0);
  const Matrix v = random_orthogonal(d, rng);
  const Matrix o = standard_normal(rng, d_y, d) / std::sqrt(static_cast<double>(d));
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Vector s(d), st(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double base = 1.0 / (static_cast<double>(i + 1) * static_cast<double>(i + 1));
    double xi = unif(rng);
    if (i == 0) xi = xi < 0 ? -1.0 : 1.0;
    s[i] = base;
    st[i] = (1.0 + operator_error * xi) * base;
  }
  Matrix f = v * s.asDiagonal() * v.transpose();
  Matrix ft = v * st.asDiagonal() * v.transpose();
  const double norm_a = spectral_norm(o * f);
  const double sigma = norm_a / std::sqrt(std::pow(10.0, log10_snr));
  auto prior = make_density(GaussianDensity{Vector::Zero(d), 1.0});
  KlSweepInstance inst{
      make_linear_problem(o, std::move(f), std::move(ft), sigma, prior, true, Vector::Zero(d_y)),
      {}};
  inst.k = build_k(inst.prob.a, inst.prob.a_tilde, sigma * sigma);
  return inst;
}

}  // namespace pimh
