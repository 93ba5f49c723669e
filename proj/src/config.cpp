#include "proximh/config.hpp"

#include <toml.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace pimh {

namespace {

class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!table_) return;
    const toml::node* node = table_->get(key);
    if (!node) return;
    out = convert<T>(*node, key);
  }

  template <class T>
  void get_list(const char* key, std::vector<T>& out) {
    seen_.insert(key);
    if (!table_) return;
    const toml::node* node = table_->get(key);
    if (!node) return;
    const toml::array* arr = node->as_array();
    if (!arr) fail(key, "expected an array");
    std::vector<T> values;
    for (const auto& item : *arr) values.push_back(convert<T>(item, key));
    out = std::move(values);
  }

  void allow(const std::string& key) { seen_.insert(key); }

  void finish() const {
    if (!table_) return;
    for (const auto& [key, value] : *table_) {
      if (!seen_.count(std::string(key.str()))) {
        throw ConfigError("unknown key '" + std::string(key.str()) + "' in " + name_);
      }
    }
  }

 private:
  [[noreturn]] void fail(const char* key, const std::string& what) const {
    throw ConfigError(name_ + "." + key + ": " + what);
  }

  template <class T>
  T convert(const toml::node& node, const char* key) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (auto v = node.value_exact<bool>()) return *v;
      fail(key, "expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = node.value_exact<std::string>()) return *v;
      fail(key, "expected a string");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (node.is_integer()) return static_cast<T>(*node.value<std::int64_t>());
      if (auto v = node.value_exact<double>()) return *v;
      fail(key, "expected a number");
    } else {
      auto v = node.value_exact<std::int64_t>();
      if (!v) fail(key, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (*v < 0) fail(key, "must be nonnegative");
      }
      return static_cast<T>(*v);
    }
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

void check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void read_bimodal(Section& s, BimodalSettings& b) {
  s.get("test", b.test);
  s.get("d", b.d);
  s.get("d_y", b.d_y);
  s.get("alpha_minus", b.perturbation.alpha_minus);
  s.get("alpha_plus", b.perturbation.alpha_plus);
  s.get("epsilon", b.perturbation.epsilon);
  s.get("rank", b.perturbation.rank);
  s.get("threshold", b.perturbation.threshold);
  s.get("c", b.c);
  s.get("tau", b.tau);
  s.get("beta_factor", b.beta_factor);
  s.get("pool_size", b.pool_size);
  s.get("steps", b.steps);
  s.get("trials", b.trials);
  s.get("mala_steps", b.mala_steps);
  s.get("reference_draws", b.reference_draws);
}

}  // namespace

ExperimentConfig parse_config(const std::string& toml_text) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config parse error: " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(msg.str());
  }

  ExperimentConfig cfg;
  static const std::set<std::string> tables = {"noise",     "kl_sweep",  "bimodal", "beta_sweep",
                                               "generator", "helmholtz", "logdet"};
  Section top(&root, "config");
  top.get("experiment", cfg.experiment);
  top.get("seed", cfg.seed);
  top.get("output_dir", cfg.output_dir);
  for (const auto& name : tables) {
    top.allow(name);
    if (root.contains(name) && !root[name].is_table()) throw ConfigError("'" + name + "' must be a table");
  }
  top.finish();

  Section noise(root["noise"].as_table(), "noise");
  noise.get("target", cfg.noise.target);
  noise.get("lo", cfg.noise.lo);
  noise.get("hi", cfg.noise.hi);
  noise.finish();

  Section kl(root["kl_sweep"].as_table(), "kl_sweep");
  auto& k = cfg.kl_sweep;
  kl.get("d", k.d);
  kl.get("obs_ratio", k.obs_ratio);
  kl.get("log10_snr", k.log10_snr);
  kl.get("operator_error", k.operator_error);
  kl.get_list("sweeps", k.sweeps);
  kl.get_list("snr_values", k.snr_values);
  kl.get_list("error_values", k.error_values);
  kl.get_list("ratio_values", k.ratio_values);
  kl.get_list("dim_values", k.dim_values);
  kl.get("max_dim", k.max_dim);
  kl.get("mc_points", k.mc_points);
  kl.get("mc_samples", k.mc_samples);
  kl.finish();

  Section bi(root["bimodal"].as_table(), "bimodal");
  read_bimodal(bi, cfg.bimodal);
  bi.finish();

  Section bs(root["beta_sweep"].as_table(), "beta_sweep");
  bs.get("factor_min", cfg.beta_sweep.factor_min);
  bs.get("factor_max", cfg.beta_sweep.factor_max);
  bs.get("points", cfg.beta_sweep.points);
  bs.get("trials", cfg.beta_sweep.trials);
  bs.finish();

  Section gen(root["generator"].as_table(), "generator");
  auto& g = cfg.generator;
  gen.get("d_z", g.d_z);
  gen.get("d_x", g.d_x);
  gen.get("d_y", g.d_y);
  gen.get_list("hidden", g.hidden);
  gen.get("activation", g.activation);
  gen.get("operator_error", g.operator_error);
  gen.get("beta_factor", g.beta_factor);
  gen.get("include_jacobian", g.include_jacobian);
  gen.get("pool_size", g.pool_size);
  gen.get("burn_in", g.burn_in);
  gen.get("thinning", g.thinning);
  gen.get("chains", g.chains);
  gen.get("steps", g.steps);
  gen.get("trials", g.trials);
  gen.get("reference_steps", g.reference_steps);
  gen.get("reference_thinning", g.reference_thinning);
  gen.get("reference_chains", g.reference_chains);
  gen.finish();

  Section hz(root["helmholtz"].as_table(), "helmholtz");
  auto& h = cfg.helmholtz;
  hz.get("fine_n", h.setup.fine_n);
  hz.get("coarse_n", h.setup.coarse_n);
  hz.get("param_n", h.setup.param_n);
  hz.get("k_wave", h.setup.k_wave);
  hz.get("n_sources", h.setup.n_sources);
  hz.get("source_width", h.setup.source_width);
  hz.get("d_y", h.setup.d_y);
  hz.get("gmres_tolerance", h.setup.solver.tolerance);
  hz.get("gmres_restart", h.setup.solver.restart);
  hz.get("gmres_max_iterations", h.setup.solver.max_iterations);
  hz.get("precondition", h.setup.precondition);
  hz.get("tv_weight", h.tv_weight);
  hz.get("tv_epsilon", h.tv_epsilon);
  hz.get("beta_factor", h.beta_factor);
  hz.get("medium_contrast", h.medium_contrast);
  hz.get("pool_size", h.pool_size);
  hz.get("burn_in", h.burn_in);
  hz.get("thinning", h.thinning);
  hz.get("chains", h.chains);
  hz.get("steps", h.steps);
  hz.get("trials", h.trials);
  hz.get("reference_steps", h.reference_steps);
  hz.get("reference_thinning", h.reference_thinning);
  hz.get("reference_chains", h.reference_chains);
  hz.get("gmres_checks", h.gmres_checks);
  hz.finish();

  Section ld(root["logdet"].as_table(), "logdet");
  ld.get_list("deltas", cfg.logdet.deltas);
  ld.get("samples", cfg.logdet.samples);
  ld.get("pairs", cfg.logdet.pairs);
  ld.finish();

  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void validate(const ExperimentConfig& cfg) {
  check(std::find(kExperiments.begin(), kExperiments.end(), cfg.experiment) != kExperiments.end(),
        "experiment must be one of kl_sweep, bimodal, beta_sweep, generator_nonlinear, "
        "helmholtz_linear, helmholtz_nonlinear, logdet_diag (got '" + cfg.experiment + "')");
  const auto& n = cfg.noise;
  check(n.lo >= 0.15 && n.hi <= 0.20 && n.lo <= n.target && n.target <= n.hi,
        "noise: need 0.15 ≤ lo ≤ target ≤ hi ≤ 0.20");

  const auto& k = cfg.kl_sweep;
  check(k.d >= 2 && k.obs_ratio > 0 && k.obs_ratio <= 1, "kl_sweep: need d ≥ 2 and 0 < obs_ratio ≤ 1");
  check(k.operator_error >= 0 && k.operator_error < 1, "kl_sweep: operator_error must lie in [0, 1)");
  check(k.max_dim >= 2 && k.mc_points >= 0 && k.mc_samples >= 2, "kl_sweep: bad max_dim/mc settings");
  for (const auto& s : k.sweeps) {
    check(s == "noise" || s == "error" || s == "ratio" || s == "dimension",
          "kl_sweep: unknown sweep '" + s + "'");
  }
  for (double v : k.error_values) check(v >= 0 && v < 1, "kl_sweep: error values must lie in [0, 1)");
  for (double v : k.ratio_values) check(v > 0 && v <= 1, "kl_sweep: ratio values must lie in (0, 1]");
  for (double v : k.dim_values) check(v >= 2 && v == std::floor(v), "kl_sweep: dimensions must be integers ≥ 2");

  const auto& b = cfg.bimodal;
  check(b.test == "I" || b.test == "II" || b.test == "III", "bimodal: test must be I, II or III");
  check(b.d >= 2 && b.d_y >= 1 && b.d_y <= b.d, "bimodal: need 1 ≤ d_y ≤ d");
  check(b.tau >= 0 && b.beta_factor > 0, "bimodal: need tau ≥ 0 and beta_factor > 0");
  check(b.pool_size >= 1 && b.steps >= 1 && b.trials >= 1 && b.mala_steps >= 1 && b.reference_draws >= 1,
        "bimodal: pool_size, steps, trials, mala_steps and reference_draws must be positive");
  check(b.perturbation.alpha_minus > 0 && b.perturbation.alpha_minus <= b.perturbation.alpha_plus,
        "bimodal: need 0 < alpha_minus ≤ alpha_plus");

  const auto& s = cfg.beta_sweep;
  check(s.factor_min > 0 && s.factor_max > s.factor_min && s.points >= 2 && s.trials >= 1,
        "beta_sweep: need 0 < factor_min < factor_max, points ≥ 2, trials ≥ 1");

  const auto& g = cfg.generator;
  check(g.d_z >= 1 && g.d_x >= g.d_z && g.d_y >= 1 && g.d_y <= g.d_x, "generator: bad dimensions");
  check(g.hidden.size() <= 3, "generator: at most 3 hidden layers");
  check(g.activation == "tanh" || g.activation == "identity", "generator: activation must be tanh or identity");
  check(g.operator_error >= 0 && g.operator_error < 1 && g.beta_factor > 0, "generator: bad operator_error/beta_factor");
  check(g.pool_size >= 1 && g.thinning >= 1 && g.chains >= 1 && g.steps >= 1 && g.trials >= 1 &&
            g.reference_steps >= 1 && g.reference_thinning >= 1 && g.reference_chains >= 1,
        "generator: sampler settings must be positive");

  const auto& h = cfg.helmholtz;
  check(h.setup.fine_n <= 64 && h.setup.coarse_n <= 32 && h.setup.param_n <= 16,
        "helmholtz: desk scale needs fine_n ≤ 64, coarse_n ≤ 32, param_n ≤ 16");
  check(h.setup.coarse_n <= h.setup.fine_n && h.setup.param_n >= 2 && h.setup.n_sources >= 1 &&
            h.setup.n_sources <= 4 && h.setup.d_y >= 1,
        "helmholtz: need coarse_n ≤ fine_n, param_n ≥ 2, 1 ≤ n_sources ≤ 4, d_y ≥ 1");
  check(h.tv_weight >= 0 && h.tv_epsilon > 0 && h.beta_factor > 0, "helmholtz: bad prior/beta settings");
  check(h.pool_size >= 1 && h.thinning >= 1 && h.chains >= 1 && h.steps >= 1 && h.trials >= 1 &&
            h.reference_steps >= 1 && h.reference_thinning >= 1 && h.reference_chains >= 1,
        "helmholtz: sampler settings must be positive");

  for (double d : cfg.logdet.deltas) check(d >= 0 && d < 1, "logdet: deltas must lie in [0, 1)");
  check(cfg.logdet.samples >= 2 && cfg.logdet.pairs >= 1, "logdet: need samples ≥ 2 and pairs ≥ 1");
}

namespace {

nlohmann::json bimodal_json(const BimodalSettings& b) {
  return {{"test", b.test},
          {"d", b.d},
          {"d_y", b.d_y},
          {"alpha_minus", b.perturbation.alpha_minus},
          {"alpha_plus", b.perturbation.alpha_plus},
          {"epsilon", b.perturbation.epsilon},
          {"rank", b.perturbation.rank},
          {"threshold", b.perturbation.threshold},
          {"c", b.c},
          {"tau", b.tau},
          {"beta_factor", b.beta_factor},
          {"pool_size", b.pool_size},
          {"steps", b.steps},
          {"trials", b.trials},
          {"mala_steps", b.mala_steps},
          {"reference_draws", b.reference_draws}};
}

nlohmann::json generator_json(const GeneratorSettings& g) {
  return {{"d_z", g.d_z},
          {"d_x", g.d_x},
          {"d_y", g.d_y},
          {"hidden", g.hidden},
          {"activation", g.activation},
          {"operator_error", g.operator_error},
          {"beta_factor", g.beta_factor},
          {"include_jacobian", g.include_jacobian},
          {"pool_size", g.pool_size},
          {"burn_in", g.burn_in},
          {"thinning", g.thinning},
          {"chains", g.chains},
          {"steps", g.steps},
          {"trials", g.trials},
          {"reference_steps", g.reference_steps},
          {"reference_thinning", g.reference_thinning},
          {"reference_chains", g.reference_chains}};
}

}  // namespace

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["experiment"] = cfg.experiment;
  j["seed"] = cfg.seed;
  j["noise"] = {{"target", cfg.noise.target}, {"lo", cfg.noise.lo}, {"hi", cfg.noise.hi}};
  const auto& e = cfg.experiment;
  if (e == "kl_sweep") {
    const auto& k = cfg.kl_sweep;
    j["kl_sweep"] = {{"d", k.d},
                     {"obs_ratio", k.obs_ratio},
                     {"log10_snr", k.log10_snr},
                     {"operator_error", k.operator_error},
                     {"sweeps", k.sweeps},
                     {"snr_values", k.snr_values},
                     {"error_values", k.error_values},
                     {"ratio_values", k.ratio_values},
                     {"dim_values", k.dim_values},
                     {"max_dim", k.max_dim},
                     {"mc_points", k.mc_points},
                     {"mc_samples", k.mc_samples}};
  }
  if (e == "bimodal" || e == "beta_sweep") j["bimodal"] = bimodal_json(cfg.bimodal);
  if (e == "beta_sweep") {
    const auto& s = cfg.beta_sweep;
    j["beta_sweep"] = {{"factor_min", s.factor_min},
                       {"factor_max", s.factor_max},
                       {"points", s.points},
                       {"trials", s.trials}};
  }
  if (e == "generator_nonlinear" || e == "logdet_diag") j["generator"] = generator_json(cfg.generator);
  if (e == "logdet_diag") {
    j["logdet"] = {{"deltas", cfg.logdet.deltas}, {"samples", cfg.logdet.samples}, {"pairs", cfg.logdet.pairs}};
  }
  if (e == "helmholtz_linear" || e == "helmholtz_nonlinear") {
    const auto& h = cfg.helmholtz;
    j["helmholtz"] = {{"fine_n", h.setup.fine_n},
                      {"coarse_n", h.setup.coarse_n},
                      {"param_n", h.setup.param_n},
                      {"k_wave", h.setup.k_wave},
                      {"n_sources", h.setup.n_sources},
                      {"source_width", h.setup.source_width},
                      {"d_y", h.setup.d_y},
                      {"gmres_tolerance", h.setup.solver.tolerance},
                      {"gmres_restart", h.setup.solver.restart},
                      {"gmres_max_iterations", h.setup.solver.max_iterations},
                      {"precondition", h.setup.precondition},
                      {"tv_weight", h.tv_weight},
                      {"tv_epsilon", h.tv_epsilon},
                      {"beta_factor", h.beta_factor},
                      {"medium_contrast", h.medium_contrast},
                      {"pool_size", h.pool_size},
                      {"burn_in", h.burn_in},
                      {"thinning", h.thinning},
                      {"chains", h.chains},
                      {"steps", h.steps},
                      {"trials", h.trials},
                      {"reference_steps", h.reference_steps},
                      {"reference_thinning", h.reference_thinning},
                      {"reference_chains", h.reference_chains},
                      {"gmres_checks", h.gmres_checks}};
  }
  return j;
}

NoisyData inject_noise(const std::vector<Vector>& y_clean, const NoiseSettings& noise, Rng& rng,
                       std::vector<Vector>& y_out) {
  Eigen::Index total = 0;
  for (const auto& y : y_clean) total += y.size();
  Vector clean(total);
  Eigen::Index off = 0;
  for (const auto& y : y_clean) {
    clean.segment(off, y.size()) = y;
    off += y.size();
  }
  if (!(clean.norm() > 0)) throw ConfigError("noise injection: clean data is zero");
  const Vector z = standard_normal(rng, total);
  // fixed point of σ = r‖y + σz‖/‖z‖
  double sigma = noise.target * clean.norm() / z.norm();
  for (int it = 0; it < 200; ++it) {
    const double next = noise.target * (clean + sigma * z).norm() / z.norm();
    if (std::abs(next - sigma) <= 1e-14 * sigma) {
      sigma = next;
      break;
    }
    sigma = next;
  }
  NoisyData out;
  out.y = clean + sigma * z;
  out.sigma = sigma;
  out.ratio = (sigma * z).norm() / out.y.norm();
  if (!(out.ratio >= noise.lo && out.ratio <= noise.hi)) {
    throw ConfigError("noise injection: achieved ratio " + std::to_string(out.ratio) +
                      " lies outside the configured band");
  }
  y_out.clear();
  off = 0;
  for (const auto& y : y_clean) {
    y_out.push_back(out.y.segment(off, y.size()));
    off += y.size();
  }
  return out;
}

NoisyData inject_noise(const Vector& y_clean, const NoiseSettings& noise, Rng& rng) {
  std::vector<Vector> parts;
  return inject_noise(std::vector<Vector>{y_clean}, noise, rng, parts);
}

}  // namespace pimh
