#include "proximh/samplers.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace pimh {

std::string to_string(ProposalKind kind) {
  return kind == ProposalKind::pool ? "pool" : "gaussian_direct";
}

GaussianDirectSource::GaussianDirectSource(Vector mean, const Matrix& covariance,
                                           Correction correction)
    : sampler_(std::move(mean), covariance), correction_(std::move(correction)) {}

ProposalDraw GaussianDirectSource::draw(Rng& rng) const {
  ProposalDraw d;
  d.x_tilde = sampler_.draw(rng);
  d.x = correction_ ? correction_(d.x_tilde) : d.x_tilde;
  return d;
}

PoolSource::PoolSource(std::vector<ProposalDraw> entries, std::optional<PoolProvenance> provenance)
    : entries_(std::move(entries)), provenance_(provenance) {
  if (entries_.empty()) throw ParameterError("PoolSource: pool is empty");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    entries_[i].index = static_cast<Eigen::Index>(i);
    if (entries_[i].x.size() == 0) entries_[i].x = entries_[i].x_tilde;
  }
}

ProposalDraw PoolSource::draw(Rng& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, entries_.size() - 1);
  return entries_[pick(rng)];
}

void correct_pool(PoolSource& pool, const Correction& correction) {
  auto& entries = pool.mutable_entries();
  const auto n = static_cast<std::ptrdiff_t>(entries.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) entries[i].x = correction(entries[i].x_tilde);
}

LogWeight cached_pool_weights(const PoolSource& pool, const LogWeight& log_weight) {
  const auto& entries = pool.entries();
  const auto n = static_cast<std::ptrdiff_t>(entries.size());
  auto weights = std::make_shared<std::vector<double>>(entries.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) (*weights)[i] = log_weight(entries[i]);
  return [weights](const ProposalDraw& d) {
    if (d.index < 0 || static_cast<std::size_t>(d.index) >= weights->size()) {
      throw StateError("cached pool weight requested for a draw outside the pool");
    }
    return (*weights)[static_cast<std::size_t>(d.index)];
  };
}

namespace {

double checked_weight(const LogWeight& log_weight, const ProposalDraw& d, Eigen::Index step) {
  const double w = log_weight(d);
  if (!std::isfinite(w)) {
    throw StateError("non-finite log weight at step " + std::to_string(step) + " (draw index " +
                     std::to_string(d.index) + ")");
  }
  return w;
}

}  // namespace

ChainRecord imh_run(const ProposalSource& proposal, const LogWeight& log_weight, Eigen::Index steps,
                    std::uint64_t seed) {
  if (steps < 1) throw ParameterError("imh_run: steps must be at least 1");
  Rng rng = make_stream(seed, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  ChainRecord rec;
  rec.seed = seed;
  rec.proposal_kind = to_string(proposal.kind());
  rec.states.resize(steps + 1, proposal.dim());
  rec.accepted.resize(static_cast<std::size_t>(steps));
  rec.log_accept_probs.resize(steps);
  rec.log_weights.resize(steps + 1);

  ProposalDraw current = proposal.draw(rng);
  double w = checked_weight(log_weight, current, 0);
  rec.states.row(0) = current.x.transpose();
  rec.log_weights[0] = w;

  Eigen::Index n_acc = 0;
  for (Eigen::Index t = 0; t < steps; ++t) {
    ProposalDraw cand = proposal.draw(rng);
    const double wc = checked_weight(log_weight, cand, t + 1);
    const double log_a = std::min(0.0, wc - w);
    const bool acc = std::log(unif(rng)) < log_a;
    rec.log_accept_probs[t] = log_a;
    rec.accepted[static_cast<std::size_t>(t)] = acc;
    if (acc) {
      current = std::move(cand);
      w = wc;
      ++n_acc;
    }
    rec.states.row(t + 1) = current.x.transpose();
    rec.log_weights[t + 1] = w;
  }
  rec.acceptance_rate = static_cast<double>(n_acc) / static_cast<double>(steps);
  if (const auto* pool = dynamic_cast<const PoolSource*>(&proposal)) rec.pool = pool->provenance();
  return rec;
}

LogDensityGrad as_log_density_grad(const DensityPtr& density) {
  return [density](const Vector& x, Vector& grad) { return density->log_density_grad(x, grad); };
}

namespace {

double checked_eval(const LogDensityGrad& target, const Vector& x, Vector& grad, Eigen::Index step) {
  const double v = target(x, grad);
  if (!std::isfinite(v) || !grad.allFinite()) {
    throw StateError("non-finite log density or gradient at MALA step " + std::to_string(step));
  }
  return v;
}

}  // namespace

ChainRecord mala_run(const LogDensityGrad& target, double step_size, Eigen::Index steps,
                     std::uint64_t seed, const Vector& init) {
  if (steps < 1) throw ParameterError("mala_run: steps must be at least 1");
  if (!(step_size > 0)) throw ParameterError("mala_run: step size must be positive");
  Rng rng = make_stream(seed, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double h = step_size;
  const double half_h2 = 0.5 * h * h;
  const Eigen::Index d = init.size();

  ChainRecord rec;
  rec.seed = seed;
  rec.proposal_kind = "mala";
  rec.states.resize(steps + 1, d);
  rec.accepted.resize(static_cast<std::size_t>(steps));
  rec.log_accept_probs.resize(steps);
  rec.log_weights.resize(steps + 1);

  Vector x = init;
  Vector g(d);
  double lp = checked_eval(target, x, g, 0);
  rec.states.row(0) = x.transpose();
  rec.log_weights[0] = lp;

  Vector gc(d);
  Eigen::Index n_acc = 0;
  for (Eigen::Index t = 0; t < steps; ++t) {
    const Vector xc = x + half_h2 * g + h * standard_normal(rng, d);
    const double lpc = checked_eval(target, xc, gc, t + 1);
    const double fwd = -(xc - x - half_h2 * g).squaredNorm() / (2.0 * h * h);
    const double bwd = -(x - xc - half_h2 * gc).squaredNorm() / (2.0 * h * h);
    const double log_a = std::min(0.0, lpc - lp + bwd - fwd);
    const bool acc = std::log(unif(rng)) < log_a;
    rec.log_accept_probs[t] = log_a;
    rec.accepted[static_cast<std::size_t>(t)] = acc;
    if (acc) {
      x = xc;
      g.swap(gc);
      lp = lpc;
      ++n_acc;
    }
    rec.states.row(t + 1) = x.transpose();
    rec.log_weights[t + 1] = lp;
  }
  rec.acceptance_rate = static_cast<double>(n_acc) / static_cast<double>(steps);
  return rec;
}

double default_mala_step(const LogDensityGrad& target, const Vector& x0, std::uint64_t seed) {
  const Eigen::Index d = x0.size();
  Rng rng = make_stream(seed, 99);
  Vector g0(d), g1(d);
  target(x0, g0);
  const double eps = 1e-4;
  double m_hat = 0.0;
  for (int probe = 0; probe < 5; ++probe) {
    Vector u = standard_normal(rng, d);
    u.normalize();
    target(x0 + eps * u, g1);
    m_hat = std::max(m_hat, (g1 - g0).norm() / eps);
  }
  const double curv = m_hat > 0 ? std::min(1.0, 1.0 / std::sqrt(m_hat)) : 1.0;
  return 0.5 * curv * std::pow(static_cast<double>(d), -1.0 / 6.0);
}

double tune_mala_step(const LogDensityGrad& target, const Vector& x0, double h0, std::uint64_t seed,
                      int batches, Eigen::Index batch_steps, Vector* last_state) {
  if (!(h0 > 0)) throw ParameterError("tune_mala_step: initial step must be positive");
  double h = h0;
  Vector x = x0;
  for (int b = 0; b < batches; ++b) {
    const ChainRecord rec = mala_run(target, h, batch_steps, seed + 15485863ULL * static_cast<std::uint64_t>(b + 1), x);
    x = rec.states.bottomRows(1).transpose();
    const double gain = 2.0 / std::sqrt(1.0 + b);
    h *= std::exp(gain * (rec.acceptance_rate - kMalaTargetAcceptance));
  }
  if (last_state) *last_state = x;
  return h;
}

PoolSource build_proposal_pool(const LogDensityGrad& approx_target, const Vector& init,
                               const PoolSettings& s, std::uint64_t seed) {
  if (s.pool_size < 1) throw ParameterError("build_proposal_pool: pool_size must be at least 1");
  if (s.chains < 1 || s.thinning < 1 || s.burn_in < 0) {
    throw ParameterError("build_proposal_pool: invalid chain layout");
  }
  const double h = s.step_size > 0 ? s.step_size
                                   : tune_mala_step(approx_target, init,
                                                    default_mala_step(approx_target, init, seed), seed);
  const Eigen::Index n_chains = std::min(s.chains, s.pool_size);

  std::vector<std::vector<ProposalDraw>> per_chain(static_cast<std::size_t>(n_chains));
  std::vector<double> rates(static_cast<std::size_t>(n_chains));
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index c = 0; c < n_chains; ++c) {
    const Eigen::Index keep = s.pool_size / n_chains + (c < s.pool_size % n_chains ? 1 : 0);
    Rng init_rng = make_stream(seed, 1000 + static_cast<std::uint64_t>(c));
    Vector start = init;
    if (s.init_scale > 0) start += s.init_scale * standard_normal(init_rng, init.size());
    const Eigen::Index steps = s.burn_in + keep * s.thinning;
    const ChainRecord rec =
        mala_run(approx_target, h, steps, seed + 7919 * static_cast<std::uint64_t>(c + 1), start);
    auto& out = per_chain[static_cast<std::size_t>(c)];
    for (Eigen::Index i = 1; i <= keep; ++i) {
      const Eigen::Index row = s.burn_in + i * s.thinning;
      ProposalDraw d;
      d.x_tilde = rec.states.row(row).transpose();
      d.x = d.x_tilde;
      d.log_pa = rec.log_weights[row];
      out.push_back(std::move(d));
    }
    rates[static_cast<std::size_t>(c)] = rec.acceptance_rate;
  }

  std::vector<ProposalDraw> entries;
  entries.reserve(static_cast<std::size_t>(s.pool_size));
  double rate = 0.0;
  for (std::size_t c = 0; c < per_chain.size(); ++c) {
    for (auto& d : per_chain[c]) entries.push_back(std::move(d));
    rate += rates[c];
  }
  PoolProvenance prov{s.burn_in, s.thinning, n_chains, h, rate / static_cast<double>(n_chains)};
  return PoolSource(std::move(entries), prov);
}

LinearWeights::LinearWeights(PosteriorKind kind, const LinearInverseProblem& prob,
                             const CorrectionOperatorK* k)
    : kind_(kind), prob_(prob) {
  if (!prob.prior) throw ParameterError("linear weights need a prior");
  if (kind == PosteriorKind::exact) throw ParameterError("linear weights: exact is not a proposal");
  if (kind == PosteriorKind::latent) latent_ = latent_map(prob);
  (void)k;
}

double LinearWeights::operator()(const ProposalDraw& d) const {
  require_dims(d.x.size() == prob_.dim(), "linear weight: draw has wrong dimension");
  switch (kind_) {
    case PosteriorKind::approx:
      return log_likelihood(prob_, prob_.a * d.x) - log_likelihood(prob_, prob_.a_tilde * d.x);
    case PosteriorKind::latent:
      return prob_.prior->log_density(d.x) - prob_.prior->log_density(latent_ * d.x);
    case PosteriorKind::proximal:
      if (d.x_tilde.size() != d.x.size()) {
        throw ParameterError("proximal weight needs the paired approximate draw");
      }
      return log_likelihood(prob_, prob_.a * d.x) - log_likelihood(prob_, prob_.a_tilde * d.x_tilde) +
             prob_.prior->log_density(d.x) - prob_.prior->log_density(d.x_tilde);
    case PosteriorKind::exact:
      break;
  }
  return 0.0;
}

double log_weight_linear(PosteriorKind kind, const LinearInverseProblem& prob,
                         const CorrectionOperatorK* k, const ProposalDraw& draw) {
  return LinearWeights(kind, prob, k)(draw);
}

namespace {

void check_nonlinear(const NonlinearInverseProblem& prob) {
  if (prob.sources.empty() || prob.sources.size() != prob.y.size()) {
    throw ParameterError("nonlinear problem: need one observation per source");
  }
  if (!prob.prior) throw ParameterError("nonlinear problem has no prior");
  if (!(prob.sigma > 0)) throw ParameterError("nonlinear problem: sigma must be positive");
}

}  // namespace

double nonlinear_log_posterior(const NonlinearInverseProblem& prob, const Vector& x, bool approx) {
  check_nonlinear(prob);
  const double inv2s2 = 0.5 / (prob.sigma * prob.sigma);
  double total = prob.prior->log_density(x);
  for (std::size_t i = 0; i < prob.sources.size(); ++i) {
    const auto& m = approx ? prob.sources[i].forward_tilde : prob.sources[i].forward;
    total -= inv2s2 * (prob.y[i] - m->apply(x)).squaredNorm();
  }
  return total;
}

double nonlinear_log_posterior_grad(const NonlinearInverseProblem& prob, const Vector& x,
                                    bool approx, Vector& grad) {
  check_nonlinear(prob);
  const double inv_s2 = 1.0 / (prob.sigma * prob.sigma);
  double total = prob.prior->log_density_grad(x, grad);
  for (std::size_t i = 0; i < prob.sources.size(); ++i) {
    const auto& m = approx ? prob.sources[i].forward_tilde : prob.sources[i].forward;
    const auto lin = m->linearize(x);
    const Vector r = prob.y[i] - lin->value();
    total -= 0.5 * inv_s2 * r.squaredNorm();
    grad += inv_s2 * lin->vjp(r);
  }
  return total;
}

double log_weight_nonlinear(const NonlinearInverseProblem& prob, const ProposalDraw& draw,
                            bool include_jacobian) {
  if (draw.x_tilde.size() == 0 || draw.x.size() == 0) {
    throw ParameterError("nonlinear weight needs the (x̃, x) pair");
  }
  const double log_pa =
      std::isnan(draw.log_pa) ? nonlinear_log_posterior(prob, draw.x_tilde, true) : draw.log_pa;
  double w = nonlinear_log_posterior(prob, draw.x, false) - log_pa;
  if (include_jacobian) {
    if (!draw.log_det) throw UnsupportedModelError("Jacobian term requested but the draw has no log-det");
    w += *draw.log_det;
  }
  return w;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_chain_csv(const std::string& path, const ChainRecord& chain) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path);
  out << "step,accepted,log_accept_prob";
  for (Eigen::Index j = 0; j < chain.states.cols(); ++j) out << ",x" << j;
  out << "\n";
  for (Eigen::Index t = 0; t < chain.states.rows(); ++t) {
    const bool acc = t == 0 || chain.accepted[static_cast<std::size_t>(t - 1)];
    out << t << "," << (acc ? 1 : 0) << "," << fmt_double(t == 0 ? 0.0 : chain.log_accept_probs[t - 1]);
    for (Eigen::Index j = 0; j < chain.states.cols(); ++j) out << "," << fmt_double(chain.states(t, j));
    out << "\n";
  }
}

void write_chain_metadata(const std::string& path, const ChainRecord& chain) {
  nlohmann::json j;
  j["seed"] = chain.seed;
  j["proposal_kind"] = chain.proposal_kind;
  j["steps"] = chain.states.rows() - 1;
  j["acceptance_rate"] = chain.acceptance_rate;
  if (chain.beta) j["beta"] = *chain.beta;
  if (chain.pool) {
    j["pool"] = {{"burn_in", chain.pool->burn_in},
                 {"thinning", chain.pool->thinning},
                 {"chains", chain.pool->chains},
                 {"step_size", chain.pool->step_size},
                 {"acceptance_rate", chain.pool->acceptance_rate}};
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path);
  out << j.dump(2) << "\n";
}

}  // namespace pimh
