#include "proximh/config.hpp"
#include "proximh/experiments.hpp"
#include "proximh/oracles.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <iostream>

namespace {

int run_oracle(const std::string& suite, std::uint64_t seed) {
  pimh::oracle::SuiteResult res;
  if (suite == "kl") res = pimh::oracle::kl_suite(seed);
  else if (suite == "gradient") res = pimh::oracle::gradient_suite(seed);
  else res = pimh::oracle::kernel_suite(seed);
  for (const auto& line : res.lines) std::cout << line << "\n";
  std::cout << (res.passed ? "PASS" : "FAIL") << "\n";
  return res.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proximal independence Metropolis-Hastings experiments"};
  app.require_subcommand(1);

  std::string experiment, config_path, out_dir, suite;
  std::uint64_t seed = 0;
  int threads = 0;

  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("experiment", experiment, "Experiment name")
      ->required()
      ->check(CLI::IsMember(pimh::kExperiments));
  run->add_option("--config", config_path, "TOML config")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory (overrides output_dir)");
  auto* seed_opt = run->add_option("--seed", seed, "Seed (overrides config)");
  run->add_option("--threads", threads, "OpenMP threads")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "Parse and validate a config");
  validate->add_option("--config", config_path, "TOML config")->required()->check(CLI::ExistingFile);

  auto* oracle = app.add_subcommand("oracle", "Run a standalone oracle suite");
  oracle->add_option("suite", suite, "kl, gradient or kernel")
      ->required()
      ->check(CLI::IsMember({"kl", "gradient", "kernel"}));
  oracle->add_option("--seed", seed, "Seed")->default_val(20240601);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (threads > 0) omp_set_num_threads(threads);
    if (*validate) {
      const auto cfg = pimh::load_config(config_path);
      std::cout << pimh::to_json(cfg).dump(2) << "\n";
      return 0;
    }
    if (*oracle) return run_oracle(suite, seed);

    auto cfg = pimh::load_config(config_path);
    if (cfg.experiment != experiment) {
      throw pimh::ConfigError("config describes '" + cfg.experiment + "' but '" + experiment + "' was requested");
    }
    if (*seed_opt) cfg.seed = seed;
    const std::string dir = out_dir.empty() ? cfg.output_dir : out_dir;
    for (const auto& f : pimh::run_experiment(cfg, dir)) std::cout << f << "\n";
    return 0;
  } catch (const pimh::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const pimh::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  }
}
