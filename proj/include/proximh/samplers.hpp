#pragma once

#include "proximh/common.hpp"
#include "proximh/densities.hpp"
#include "proximh/linalg.hpp"
#include "proximh/posteriors.hpp"
#include "proximh/proximal.hpp"

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>

namespace pimh {

using StateMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One proposal: the draw x̃ ~ π_a, the corrected point x handed to the chain
/// (x = x̃ for uncorrected proposals), and cached quantities.
struct ProposalDraw {
  Vector x_tilde;
  Vector x;
  double log_pa = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> log_det;
  Eigen::Index index = -1;
};

enum class ProposalKind { gaussian_direct, pool };

std::string to_string(ProposalKind kind);

struct PoolProvenance {
  Eigen::Index burn_in = 0;
  Eigen::Index thinning = 1;
  Eigen::Index chains = 1;
  double step_size = 0.0;
  double acceptance_rate = 0.0;
};

class ProposalSource {
 public:
  virtual ~ProposalSource() = default;
  virtual ProposalKind kind() const = 0;
  virtual Eigen::Index dim() const = 0;
  virtual ProposalDraw draw(Rng& rng) const = 0;
};

using Correction = std::function<Vector(const Vector&)>;

/// I.i.d. draws from N(μ, Σ) followed by an optional correction x = c(x̃).
class GaussianDirectSource final : public ProposalSource {
 public:
  GaussianDirectSource(Vector mean, const Matrix& covariance, Correction correction = {});
  ProposalKind kind() const override { return ProposalKind::gaussian_direct; }
  Eigen::Index dim() const override { return sampler_.mean.size(); }
  ProposalDraw draw(Rng& rng) const override;

 private:
  GaussianSampler sampler_;
  Correction correction_;
};

/// Uniform draws with replacement from a precomputed pool.
class PoolSource final : public ProposalSource {
 public:
  PoolSource(std::vector<ProposalDraw> entries, std::optional<PoolProvenance> provenance = {});
  ProposalKind kind() const override { return ProposalKind::pool; }
  Eigen::Index dim() const override { return entries_.front().x.size(); }
  ProposalDraw draw(Rng& rng) const override;

  const std::vector<ProposalDraw>& entries() const { return entries_; }
  std::vector<ProposalDraw>& mutable_entries() { return entries_; }
  const std::optional<PoolProvenance>& provenance() const { return provenance_; }

 private:
  std::vector<ProposalDraw> entries_;
  std::optional<PoolProvenance> provenance_;
};

/// Applies `correction` to every pool entry's x̃ (parallel over entries).
void correct_pool(PoolSource& pool, const Correction& correction);

struct ChainRecord {
  StateMatrix states;  // (steps + 1) × d
  std::vector<bool> accepted;
  Vector log_accept_probs;
  Vector log_weights;  // log weight (IMH) or log target (MALA) of the current state, per row
  double acceptance_rate = 0.0;
  std::uint64_t seed = 0;
  std::string proposal_kind;
  std::optional<double> beta;
  std::optional<PoolProvenance> pool;
};

using LogWeight = std::function<double(const ProposalDraw&)>;

/// Independence Metropolis–Hastings: accept x′ over x_t with probability
/// min{1, exp(w(x′) − w(x_t))}; the chain starts from one proposal draw.
ChainRecord imh_run(const ProposalSource& proposal, const LogWeight& log_weight, Eigen::Index steps,
                    std::uint64_t seed);

/// Precomputes log weights over a pool so that each IMH step is a lookup.
LogWeight cached_pool_weights(const PoolSource& pool, const LogWeight& log_weight);

/// log π(x) with gradient written into the second argument.
using LogDensityGrad = std::function<double(const Vector&, Vector&)>;

LogDensityGrad as_log_density_grad(const DensityPtr& density);

ChainRecord mala_run(const LogDensityGrad& target, double step_size, Eigen::Index steps,
                     std::uint64_t seed, const Vector& init);

/// h = 0.5·min(1, m̂^{-1/2})·d^{-1/6} with m̂ a finite-difference curvature
/// probe of the gradient at x0.
double default_mala_step(const LogDensityGrad& target, const Vector& x0, std::uint64_t seed);

inline constexpr double kMalaTargetAcceptance = 0.574;

/// Pilot adaptation: `batches` short runs from x0, each rescaling h by
/// exp(γ_b(acceptance − 0.574)) with γ_b = 2/√(b+1). The pilot's final
/// state is written to `last_state` when given.
double tune_mala_step(const LogDensityGrad& target, const Vector& x0, double h0, std::uint64_t seed,
                      int batches = 30, Eigen::Index batch_steps = 100, Vector* last_state = nullptr);

struct PoolSettings {
  Eigen::Index pool_size = 1000;
  Eigen::Index burn_in = 1000;
  Eigen::Index thinning = 10;
  Eigen::Index chains = 1;
  double step_size = 0.0;  // 0 selects a tuned step from default_mala_step
  double init_scale = 0.0;
};

/// MALA on π_a, split over `chains` chains started from init + init_scale·ξ;
/// each chain discards `burn_in` states and keeps every `thinning`-th.
PoolSource build_proposal_pool(const LogDensityGrad& approx_target, const Vector& init,
                               const PoolSettings& settings, std::uint64_t seed);

/// Weights for the linear pipelines; the latent map is computed once.
class LinearWeights {
 public:
  LinearWeights(PosteriorKind kind, const LinearInverseProblem& prob, const CorrectionOperatorK* k);
  double operator()(const ProposalDraw& draw) const;

 private:
  PosteriorKind kind_;
  const LinearInverseProblem& prob_;
  Matrix latent_;
};

double log_weight_linear(PosteriorKind kind, const LinearInverseProblem& prob,
                         const CorrectionOperatorK* k, const ProposalDraw& draw);

/// y_i = A_i(x) + e_i for each source, shared noise level and prior.
struct NonlinearInverseProblem {
  std::vector<SourcePair> sources;
  std::vector<Vector> y;
  double sigma = 1.0;
  DensityPtr prior;
};

double nonlinear_log_posterior(const NonlinearInverseProblem& prob, const Vector& x, bool approx);
double nonlinear_log_posterior_grad(const NonlinearInverseProblem& prob, const Vector& x,
                                    bool approx, Vector& grad);

/// log π(x|y) − log π_a(x̃|y), plus log|det J_GN(x̃)| when requested.
double log_weight_nonlinear(const NonlinearInverseProblem& prob, const ProposalDraw& draw,
                            bool include_jacobian = false);

/// Columnar CSV: step, accepted, log_accept_prob, x0..x{d-1}. Row 0 is the
/// initial draw and is reported as accepted with log probability 0.
void write_chain_csv(const std::string& path, const ChainRecord& chain);
void write_chain_metadata(const std::string& path, const ChainRecord& chain);

}  // namespace pimh
