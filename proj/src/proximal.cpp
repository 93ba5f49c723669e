#include "proximh/proximal.hpp"

#include <algorithm>
#include <cmath>

namespace pimh {

namespace {

class MatrixLinearization final : public Linearization {
 public:
  MatrixLinearization(const Matrix& m, Vector value) : m_(m), value_(std::move(value)) {}
  const Vector& value() const override { return value_; }
  Vector jvp(const Vector& v) const override { return m_ * v; }
  Vector vjp(const Vector& w) const override { return m_.transpose() * w; }

 private:
  const Matrix& m_;
  Vector value_;
};

class MatrixModel final : public NonlinearModel {
 public:
  explicit MatrixModel(Matrix m) : m_(std::move(m)) { check_operator(m_, "matrix model"); }
  Eigen::Index input_dim() const override { return m_.cols(); }
  Eigen::Index output_dim() const override { return m_.rows(); }
  Vector apply(const Vector& x) const override {
    require_dims(x.size() == m_.cols(), "matrix model: input has wrong dimension");
    return m_ * x;
  }
  std::unique_ptr<Linearization> linearize(const Vector& x) const override {
    return std::make_unique<MatrixLinearization>(m_, apply(x));
  }

 private:
  Matrix m_;
};

class DenseLinearization final : public Linearization {
 public:
  DenseLinearization(Vector value, Matrix jac) : value_(std::move(value)), jac_(std::move(jac)) {}
  const Vector& value() const override { return value_; }
  Vector jvp(const Vector& v) const override { return jac_ * v; }
  Vector vjp(const Vector& w) const override { return jac_.transpose() * w; }

 private:
  Vector value_;
  Matrix jac_;
};

class GeneratorLinearization final : public Linearization {
 public:
  GeneratorLinearization(const Matrix& m, const SyntheticGenerator& g, Vector z)
      : m_(m), g_(g), z_(std::move(z)), value_(m_ * generator_apply_jvp_vjp(g_, z_).x) {}
  const Vector& value() const override { return value_; }
  Vector jvp(const Vector& v) const override {
    return m_ * *generator_apply_jvp_vjp(g_, z_, &v, nullptr).jvp;
  }
  Vector vjp(const Vector& w) const override {
    const Vector mw = m_.transpose() * w;
    return *generator_apply_jvp_vjp(g_, z_, nullptr, &mw).vjp;
  }

 private:
  const Matrix& m_;
  const SyntheticGenerator& g_;
  Vector z_;
  Vector value_;
};

class GeneratorModel final : public NonlinearModel {
 public:
  GeneratorModel(Matrix m, SyntheticGenerator g) : m_(std::move(m)), g_(std::move(g)) {
    require_dims(m_.cols() == g_.output_dim(), "generator model: operator and generator do not chain");
  }
  Eigen::Index input_dim() const override { return g_.input_dim(); }
  Eigen::Index output_dim() const override { return m_.rows(); }
  Vector apply(const Vector& z) const override { return m_ * generator_apply_jvp_vjp(g_, z).x; }
  std::unique_ptr<Linearization> linearize(const Vector& z) const override {
    return std::make_unique<GeneratorLinearization>(m_, g_, z);
  }

 private:
  Matrix m_;
  SyntheticGenerator g_;
};

class FunctionModel final : public NonlinearModel {
 public:
  FunctionModel(Eigen::Index in, Eigen::Index out, std::function<Vector(const Vector&)> value,
                std::function<Matrix(const Vector&)> jacobian)
      : in_(in), out_(out), value_(std::move(value)), jacobian_(std::move(jacobian)) {}
  Eigen::Index input_dim() const override { return in_; }
  Eigen::Index output_dim() const override { return out_; }
  Vector apply(const Vector& x) const override { return value_(x); }
  std::unique_ptr<Linearization> linearize(const Vector& x) const override {
    return std::make_unique<DenseLinearization>(value_(x), jacobian_(x));
  }

 private:
  Eigen::Index in_, out_;
  std::function<Vector(const Vector&)> value_;
  std::function<Matrix(const Vector&)> jacobian_;
};

void check_sources(const std::vector<SourcePair>& sources, Eigen::Index dim) {
  if (sources.empty()) throw ParameterError("Gauss–Newton step needs at least one source");
  for (const auto& s : sources) {
    if (!s.forward || !s.forward_tilde) throw ParameterError("Gauss–Newton step: missing model handle");
    require_dims(s.forward->input_dim() == dim && s.forward_tilde->input_dim() == dim,
                 "Gauss–Newton step: sources must share the parameter dimension");
    require_dims(s.forward->output_dim() == s.forward_tilde->output_dim(),
                 "Gauss–Newton step: exact and approximate outputs differ in size");
  }
}

}  // namespace

ModelPtr make_matrix_model(Matrix m) { return std::make_shared<MatrixModel>(std::move(m)); }

ModelPtr make_generator_model(Matrix m, SyntheticGenerator g) {
  return std::make_shared<GeneratorModel>(std::move(m), std::move(g));
}

ModelPtr make_function_model(Eigen::Index input_dim, Eigen::Index output_dim,
                             std::function<Vector(const Vector&)> value,
                             std::function<Matrix(const Vector&)> jacobian) {
  return std::make_shared<FunctionModel>(input_dim, output_dim, std::move(value),
                                         std::move(jacobian));
}

Vector proximal_correct_linear(const CorrectionOperatorK& k, const Vector& x_tilde) {
  require_dims(k.k.cols() == x_tilde.size(), "proximal_correct_linear: dimension mismatch");
  return k.k * x_tilde;
}

Vector gauss_newton_step_multisource(const std::vector<SourcePair>& sources, double beta,
                                     const Vector& x_tilde, const CgSettings& solver) {
  if (!(beta > 0)) throw ParameterError("Gauss–Newton step: beta must be positive");
  check_sources(sources, x_tilde.size());

  std::vector<std::unique_ptr<Linearization>> lins;
  Vector rhs = Vector::Zero(x_tilde.size());
  for (const auto& s : sources) {
    lins.push_back(s.forward->linearize(x_tilde));
    const Vector r = lins.back()->value() - s.forward_tilde->apply(x_tilde);
    rhs -= lins.back()->vjp(r);
  }
  const auto normal = [&](const Vector& v) {
    Vector out = beta * v;
    for (const auto& lin : lins) out += lin->vjp(lin->jvp(v));
    return out;
  };
  return x_tilde + conjugate_gradient(normal, rhs, solver).x;
}

Vector gauss_newton_step(const GaussNewtonStep& gn, const Vector& x_tilde) {
  return gauss_newton_step_multisource({{gn.forward, gn.forward_tilde}}, gn.beta, x_tilde,
                                       gn.solver);
}

double proximal_objective(const std::vector<SourcePair>& sources, double beta, const Vector& x,
                          const Vector& x_tilde) {
  check_sources(sources, x.size());
  double total = beta * (x - x_tilde).squaredNorm();
  for (const auto& s : sources) total += (s.forward->apply(x) - s.forward_tilde->apply(x_tilde)).squaredNorm();
  return total;
}

LogDetMode parse_logdet_mode(const std::string& name) {
  if (name == "exact_small") return LogDetMode::exact_small;
  if (name == "eigen_delta") return LogDetMode::eigen_delta;
  throw ConfigError("unknown log-det mode '" + name + "'");
}

Matrix dense_jacobian(const NonlinearModel& model, const Vector& x) {
  const auto lin = model.linearize(x);
  const Eigen::Index rows = model.output_dim();
  const Eigen::Index cols = model.input_dim();
  Matrix jac(rows, cols);
  if (cols <= rows) {
    Vector e = Vector::Zero(cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      e[j] = 1.0;
      jac.col(j) = lin->jvp(e);
      e[j] = 0.0;
    }
  } else {
    Vector e = Vector::Zero(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      e[i] = 1.0;
      jac.row(i) = lin->vjp(e).transpose();
      e[i] = 0.0;
    }
  }
  return jac;
}

double gn_log_jacobian_det_multisource(const std::vector<SourcePair>& sources, double beta,
                                       const Vector& x_tilde, LogDetMode mode, double delta) {
  if (!(beta > 0)) throw ParameterError("gn_log_jacobian_det: beta must be positive");
  if (!(delta >= 0 && delta < 1)) throw ParameterError("gn_log_jacobian_det: delta must lie in [0, 1)");
  check_sources(sources, x_tilde.size());
  const Eigen::Index d = x_tilde.size();
  if (mode == LogDetMode::exact_small && d > kExactLogDetMaxDim) {
    throw CapacityError("gn_log_jacobian_det: exact_small mode supports at most " +
                        std::to_string(kExactLogDetMaxDim) + " parameters");
  }
  if (delta == 0.0) return 0.0;

  Matrix gram = Matrix::Zero(d, d);
  for (const auto& s : sources) {
    const Matrix jac = dense_jacobian(*s.forward, x_tilde);
    gram.noalias() += jac.transpose() * jac;
  }

  if (mode == LogDetMode::eigen_delta) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    double total = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double lambda = std::max(0.0, es.eigenvalues()[i]);
      total += std::log1p(-delta * lambda / (lambda + beta));
    }
    return total;
  }

  Matrix m = gram;
  m.diagonal().array() += beta;
  Matrix jgn = delta * beta * m.llt().solve(Matrix::Identity(d, d));
  jgn.diagonal().array() += 1.0 - delta;
  Eigen::PartialPivLU<Matrix> lu(jgn);
  const auto& u = lu.matrixLU();
  double total = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) total += std::log(std::abs(u(i, i)));
  return total;
}

double gn_log_jacobian_det(const GaussNewtonStep& gn, const Vector& x_tilde, LogDetMode mode,
                           double delta) {
  return gn_log_jacobian_det_multisource({{gn.forward, gn.forward_tilde}}, gn.beta, x_tilde, mode,
                                         delta);
}

double quantile(Vector values, double q) {
  if (values.size() == 0) throw ParameterError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(pos));
  const auto hi = std::min<Eigen::Index>(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

LogDetDiagnostics logdet_diagnostics(const GaussNewtonStep& gn, const Matrix& samples,
                                     Eigen::Index pairs, std::uint64_t seed, double delta,
                                     LogDetMode mode) {
  const Eigen::Index n = samples.cols();
  if (n < 2) throw ParameterError("logdet_diagnostics: need at least two samples");
  if (pairs < 1) throw ParameterError("logdet_diagnostics: need at least one pair");

  Vector logdets(n);
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index i = 0; i < n; ++i) {
    logdets[i] = gn_log_jacobian_det(gn, samples.col(i), mode, delta);
  }

  Rng rng = make_stream(seed, 0);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  LogDetDiagnostics out;
  out.pair_ratios.resize(pairs);
  for (Eigen::Index p = 0; p < pairs; ++p) {
    const Eigen::Index i = pick(rng);
    Eigen::Index j = pick(rng);
    while (j == i) j = pick(rng);
    out.pair_ratios[p] = std::exp(logdets[i] - logdets[j]);
  }
  out.sorted_logdets = logdets;
  std::sort(out.sorted_logdets.begin(), out.sorted_logdets.end());
  out.q05 = quantile(out.pair_ratios, 0.05);
  out.q50 = quantile(out.pair_ratios, 0.50);
  out.q95 = quantile(out.pair_ratios, 0.95);
  return out;
}

}  // namespace pimh
