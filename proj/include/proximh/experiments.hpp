#pragma once

#include "proximh/config.hpp"
#include "proximh/diagnostics.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace pimh {

/// CSV with a header row; numbers are written with 17 significant digits.
/// `write` also emits `<path>.json` holding the columns and `sidecar`.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns);
  void add(std::vector<std::string> cells);
  std::size_t rows() const { return rows_.size(); }
  void write(const std::string& path, const nlohmann::json& sidecar) const;

  static std::string num(double v);
  static std::string num(Eigen::Index v) { return std::to_string(v); }
  static std::string num(int v) { return std::to_string(v); }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

// --- KL sweep ---------------------------------------------------------------

struct KlSweepRow {
  std::string sweep;
  double value = 0.0;
  Eigen::Index d = 0;
  Eigen::Index d_y = 0;
  double log10_snr = 0.0;
  double operator_error = 0.0;
  double d_a = 0.0;
  double d_l = 0.0;
  double d_p = 0.0;
};

struct KlMonteCarloCheck {
  std::size_t row = 0;
  std::array<double, 3> closed_form{};
  std::array<double, 3> monte_carlo{};
  std::array<double, 3> std_error{};
  double max_abs_z = 0.0;
};

struct KlSweepResult {
  std::vector<KlSweepRow> rows;
  std::vector<KlMonteCarloCheck> mc_checks;
};

KlSweepResult run_kl_sweep(const ExperimentConfig& cfg, const std::string& out_dir);

// --- samplers with diagnostics ------------------------------------------------

struct SamplerOutcome {
  std::string sampler;
  Eigen::Index trial = 0;
  DiagnosticsReport report;
};

struct BimodalResult {
  double sigma = 0.0;
  double noise_ratio = 0.0;
  double reference_positive_mass = 0.0;
  bool latent_available = false;
  std::vector<SamplerOutcome> outcomes;

  const SamplerOutcome& find(const std::string& sampler, Eigen::Index trial) const;
};

BimodalResult run_bimodal(const ExperimentConfig& cfg, const std::string& out_dir);

struct BetaSweepResult {
  double sigma = 0.0;
  std::vector<double> factors;  // β/σ²
  std::vector<double> acceptance_rate;
  std::vector<double> relative_mean_error;
  double spearman_rho = 0.0;
};

BetaSweepResult run_beta_sweep(const ExperimentConfig& cfg, const std::string& out_dir);

struct LogdetRow {
  double delta = 0.0;
  double min_logdet = 0.0;
  double max_logdet = 0.0;
  double lower_bound = 0.0;  // d·log(1−δ)
  double max_mode_difference = 0.0;
  double ratio_q05 = 1.0;
  double ratio_q50 = 1.0;
  double ratio_q95 = 1.0;
  bool within_bounds = false;
};

struct GeneratorResult {
  double sigma = 0.0;
  double noise_ratio = 0.0;
  double reference_rhat = 0.0;
  std::vector<SamplerOutcome> outcomes;
  std::vector<LogdetRow> logdet;
};

GeneratorResult run_generator_nonlinear(const ExperimentConfig& cfg, const std::string& out_dir);
GeneratorResult run_logdet_diag(const ExperimentConfig& cfg, const std::string& out_dir);

struct GmresCheck {
  std::string label;
  int preconditioned_iterations = 0;
  int unpreconditioned_iterations = 0;
  bool unpreconditioned_converged = false;
};

struct HelmholtzResult {
  double sigma = 0.0;
  double noise_ratio = 0.0;
  std::vector<SamplerOutcome> outcomes;
  std::vector<GmresCheck> gmres;
};

HelmholtzResult run_helmholtz_linear(const ExperimentConfig& cfg, const std::string& out_dir);
HelmholtzResult run_helmholtz_nonlinear(const ExperimentConfig& cfg, const std::string& out_dir);

/// Dispatches on cfg.experiment; returns the paths written.
std::vector<std::string> run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace pimh
