#pragma once

#include "proximh/common.hpp"
#include "proximh/helmholtz.hpp"
#include "proximh/linalg.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace pimh {

inline const std::vector<std::string> kExperiments = {
    "kl_sweep",        "bimodal",          "beta_sweep",         "generator_nonlinear",
    "helmholtz_linear", "helmholtz_nonlinear", "logdet_diag"};

/// Target and admissible band for ‖e‖/‖y‖.
struct NoiseSettings {
  double target = 0.175;
  double lo = 0.15;
  double hi = 0.20;
};

struct KlSweepSettings {
  Eigen::Index d = 100;
  double obs_ratio = 0.2;
  double log10_snr = 2.5;
  double operator_error = 0.06;
  std::vector<std::string> sweeps{"noise", "error", "ratio", "dimension"};
  std::vector<double> snr_values{0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0};
  std::vector<double> error_values{0.02, 0.05, 0.08, 0.11, 0.14, 0.17, 0.21};
  std::vector<double> ratio_values{0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> dim_values{100, 200, 300, 400, 500, 1000, 2000};
  Eigen::Index max_dim = 500;
  Eigen::Index mc_points = 3;
  Eigen::Index mc_samples = 10000;
};

/// Shared by the bimodal and β-sweep experiments.
struct BimodalSettings {
  std::string test = "I";
  Eigen::Index d = 50;
  Eigen::Index d_y = 20;
  PerturbationParams perturbation;
  double c = 2.0;
  double tau = 0.3;
  double beta_factor = 1.0;
  Eigen::Index pool_size = 20000;
  Eigen::Index steps = 20000;
  Eigen::Index trials = 5;
  Eigen::Index mala_steps = 20000;
  Eigen::Index reference_draws = 200000;
};

struct BetaSweepSettings {
  double factor_min = 0.01;
  double factor_max = 100.0;
  Eigen::Index points = 17;
  Eigen::Index trials = 3;
};

struct GeneratorSettings {
  Eigen::Index d_z = 16;
  Eigen::Index d_x = 64;
  Eigen::Index d_y = 24;
  std::vector<Eigen::Index> hidden{32};
  std::string activation = "tanh";
  double operator_error = 0.06;
  double beta_factor = 1.0;
  bool include_jacobian = false;
  Eigen::Index pool_size = 4000;
  Eigen::Index burn_in = 5000;
  Eigen::Index thinning = 50;
  Eigen::Index chains = 8;
  Eigen::Index steps = 20000;
  Eigen::Index trials = 3;
  Eigen::Index reference_steps = 400000;
  Eigen::Index reference_thinning = 20;
  Eigen::Index reference_chains = 8;
};

struct HelmholtzSettings {
  HelmholtzSetup setup;
  double tv_weight = 1.0;
  double tv_epsilon = 0.1;
  double beta_factor = 1.0;
  double medium_contrast = 0.3;
  Eigen::Index pool_size = 200;
  Eigen::Index burn_in = 200;
  Eigen::Index thinning = 5;
  Eigen::Index chains = 2;
  Eigen::Index steps = 5000;
  Eigen::Index trials = 1;
  Eigen::Index reference_steps = 5000;
  Eigen::Index reference_thinning = 5;
  Eigen::Index reference_chains = 2;
  Eigen::Index gmres_checks = 3;
};

struct LogdetSettings {
  std::vector<double> deltas{0.06, 0.2, 0.5};
  Eigen::Index samples = 200;
  Eigen::Index pairs = 500;
};

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  NoiseSettings noise;
  KlSweepSettings kl_sweep;
  BimodalSettings bimodal;
  BetaSweepSettings beta_sweep;
  GeneratorSettings generator;
  HelmholtzSettings helmholtz;
  LogdetSettings logdet;
};

/// Parses and validates a TOML document; unknown keys and out-of-range
/// values raise ConfigError.
ExperimentConfig parse_config(const std::string& toml_text);
ExperimentConfig load_config(const std::string& path);
void validate(const ExperimentConfig& cfg);

/// Resolved configuration of the selected experiment (output directory
/// excluded, so that reruns into different directories compare equal).
nlohmann::json to_json(const ExperimentConfig& cfg);

struct NoisyData {
  Vector y;
  double sigma = 0.0;
  double ratio = 0.0;  // achieved ‖e‖/‖y‖
};

/// y = y_clean + σz with σ tuned so that ‖σz‖/‖y‖ hits the target; throws
/// ConfigError when the achieved ratio falls outside the band.
NoisyData inject_noise(const Vector& y_clean, const NoiseSettings& noise, Rng& rng);
/// Same for stacked multi-source data sharing one σ.
NoisyData inject_noise(const std::vector<Vector>& y_clean, const NoiseSettings& noise, Rng& rng,
                       std::vector<Vector>& y_out);

}  // namespace pimh
