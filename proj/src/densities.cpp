#include "proximh/densities.hpp"

#include "proximh/linalg.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace pimh {

ValueGrad gaussian_logpdf_grad(const GaussianDensity& g, const Vector& x) {
  require_dims(x.size() == g.mean.size(), "gaussian_logpdf_grad: dimension mismatch");
  if (!(g.variance > 0)) throw ParameterError("gaussian_logpdf_grad: variance must be positive");
  Vector r = x - g.mean;
  return {-0.5 * r.squaredNorm() / g.variance, -r / g.variance};
}

BimodalPrior make_bimodal_prior(Vector w, double c, double tau) {
  const double n = w.norm();
  if (!(n > 0)) throw ParameterError("make_bimodal_prior: w must be nonzero");
  if (!(tau >= 0)) throw ParameterError("make_bimodal_prior: tau must be nonnegative");
  return {w / n, c, tau};
}

double bimodal_quartic(const BimodalPrior& p, double t) {
  const double a = t - p.c;
  const double b = t + p.c;
  return -p.tau * a * a * b * b;
}

ValueGrad bimodal_logpdf_grad(const BimodalPrior& p, const Vector& x) {
  require_dims(x.size() == p.w.size(), "bimodal_logpdf_grad: dimension mismatch");
  const double t = p.w.dot(x);
  const double a = t - p.c;
  const double b = t + p.c;
  ValueGrad out;
  out.value = -0.5 * x.squaredNorm() - p.tau * a * a * b * b;
  const double dquartic = p.tau * (2.0 * a * b * b + 2.0 * a * a * b);
  out.grad = -x - dquartic * p.w;
  return out;
}

ValueGrad tv_eps_logprior_grad(const SmoothedTVPrior& p, const Vector& x) {
  require_dims(x.size() == static_cast<Eigen::Index>(p.n_x) * p.n_y,
               "tv_eps_logprior_grad: length must equal n_x*n_y");
  if (!(p.epsilon > 0)) throw ParameterError("tv_eps_logprior_grad: epsilon must be positive");
  const int nx = p.n_x;
  const int ny = p.n_y;
  const double eps2 = p.epsilon * p.epsilon;
  ValueGrad out;
  out.value = 0.0;
  out.grad = Vector::Zero(x.size());
  for (int r = 0; r < ny; ++r) {
    for (int c = 0; c < nx; ++c) {
      const Eigen::Index k = static_cast<Eigen::Index>(r) * nx + c;
      // forward differences, replicated boundary
      const double dx = c + 1 < nx ? x[k + 1] - x[k] : 0.0;
      const double dy = r + 1 < ny ? x[k + nx] - x[k] : 0.0;
      const double mag = std::sqrt(dx * dx + dy * dy + eps2);
      out.value += mag;
      const double g = p.weight / mag;
      if (c + 1 < nx) {
        out.grad[k + 1] += g * dx;
        out.grad[k] -= g * dx;
      }
      if (r + 1 < ny) {
        out.grad[k + nx] += g * dy;
        out.grad[k] -= g * dy;
      }
    }
  }
  out.value *= p.weight;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double act(Activation a, double v) { return a == Activation::tanh ? std::tanh(v) : v; }
double dact(Activation a, double v) {
  if (a == Activation::identity) return 1.0;
  const double t = std::tanh(v);
  return 1.0 - t * t;
}

}  // namespace

SyntheticGenerator make_generator(Eigen::Index d_z, const std::vector<Eigen::Index>& hidden,
                                  Eigen::Index d_x, Activation activation, std::uint64_t seed) {
  std::vector<Eigen::Index> widths;
  widths.push_back(d_z);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(d_x);
  if (widths.size() > 5) throw ParameterError("make_generator: at most 4 layers supported");

  Rng rng = make_stream(seed, 17);
  SyntheticGenerator g;
  g.activation = activation;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double scale = std::sqrt(2.0 / static_cast<double>(widths[l]));
    g.weights.push_back(scale * standard_normal(rng, widths[l + 1], widths[l]));
    g.biases.push_back(0.1 * standard_normal(rng, widths[l + 1]));
  }
  return g;
}

GeneratorEval generator_apply_jvp_vjp(const SyntheticGenerator& g, const Vector& z,
                                      const Vector* v, const Vector* w) {
  require_dims(!g.weights.empty(), "generator_apply_jvp_vjp: empty generator");
  require_dims(z.size() == g.input_dim(), "generator_apply_jvp_vjp: z has wrong dimension");
  if (v) require_dims(v->size() == g.input_dim(), "generator_apply_jvp_vjp: v has wrong dimension");
  if (w) require_dims(w->size() == g.output_dim(), "generator_apply_jvp_vjp: w has wrong dimension");

  const std::size_t n_layers = g.weights.size();
  std::vector<Vector> pre(n_layers);
  Vector h = z;
  Vector dh;
  if (v) dh = *v;
  for (std::size_t l = 0; l < n_layers; ++l) {
    pre[l] = g.weights[l] * h + g.biases[l];
    const bool last = l + 1 == n_layers;
    if (v) dh = g.weights[l] * dh;
    if (last) {
      h = pre[l];
    } else {
      h = pre[l].unaryExpr([&](double s) { return act(g.activation, s); });
      if (v) dh = dh.cwiseProduct(pre[l].unaryExpr([&](double s) { return dact(g.activation, s); }));
    }
  }

  GeneratorEval out;
  out.x = h;
  if (v) out.jvp = dh;
  if (w) {
    Vector adj = *w;
    for (std::size_t l = n_layers; l-- > 0;) {
      if (l + 1 != n_layers) {
        adj = adj.cwiseProduct(pre[l].unaryExpr([&](double s) { return dact(g.activation, s); }));
      }
      adj = g.weights[l].transpose() * adj;
    }
    out.vjp = adj;
  }
  return out;
}

Matrix generator_jacobian(const SyntheticGenerator& g, const Vector& z) {
  const Eigen::Index dz = g.input_dim();
  Matrix jac(g.output_dim(), dz);
  Vector e = Vector::Zero(dz);
  for (Eigen::Index j = 0; j < dz; ++j) {
    e.setZero();
    e[j] = 1.0;
    jac.col(j) = *generator_apply_jvp_vjp(g, z, &e, nullptr).jvp;
  }
  return jac;
}

void save_generator(const std::string& prefix, const SyntheticGenerator& g) {
  std::ofstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw ConfigError("cannot open " + prefix + ".bin");
  nlohmann::json manifest;
  manifest["activation"] = g.activation == Activation::tanh ? "tanh" : "identity";
  manifest["layers"] = nlohmann::json::array();
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    write_operator(bin, g.weights[l]);
    write_operator(bin, Matrix(g.biases[l]));
    manifest["layers"].push_back(
        {{"rows", g.weights[l].rows()}, {"cols", g.weights[l].cols()}, {"bias", true}});
  }
  std::ofstream js(prefix + ".json");
  if (!js) throw ConfigError("cannot open " + prefix + ".json");
  js << manifest.dump(2) << "\n";
}

SyntheticGenerator load_generator(const std::string& prefix) {
  std::ifstream js(prefix + ".json");
  if (!js) throw ConfigError("cannot open " + prefix + ".json");
  const auto manifest = nlohmann::json::parse(js);
  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw ConfigError("cannot open " + prefix + ".bin");
  SyntheticGenerator g;
  g.activation = manifest.at("activation").get<std::string>() == "tanh" ? Activation::tanh
                                                                         : Activation::identity;
  for (const auto& layer : manifest.at("layers")) {
    Matrix wmat = read_operator(bin);
    Matrix bmat = read_operator(bin);
    if (wmat.rows() != layer.at("rows").get<Eigen::Index>() ||
        wmat.cols() != layer.at("cols").get<Eigen::Index>() || bmat.cols() != 1 ||
        bmat.rows() != wmat.rows()) {
      throw ConfigError("generator manifest does not match weight container");
    }
    g.weights.push_back(std::move(wmat));
    g.biases.push_back(bmat.col(0));
  }
  for (std::size_t l = 1; l < g.weights.size(); ++l) {
    if (g.weights[l].cols() != g.weights[l - 1].rows()) {
      throw ConfigError("generator layers do not chain");
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

namespace {

class GaussianAdapter final : public Density {
 public:
  explicit GaussianAdapter(GaussianDensity g) : g_(std::move(g)) {}
  Eigen::Index dim() const override { return g_.mean.size(); }
  double log_density(const Vector& x) const override {
    require_dims(x.size() == g_.mean.size(), "Gaussian density: dimension mismatch");
    return -0.5 * (x - g_.mean).squaredNorm() / g_.variance;
  }
  double log_density_grad(const Vector& x, Vector& grad) const override {
    auto vg = gaussian_logpdf_grad(g_, x);
    grad = std::move(vg.grad);
    return vg.value;
  }

 private:
  GaussianDensity g_;
};

class BimodalAdapter final : public Density {
 public:
  explicit BimodalAdapter(BimodalPrior p) : p_(std::move(p)) {}
  Eigen::Index dim() const override { return p_.w.size(); }
  double log_density(const Vector& x) const override {
    require_dims(x.size() == p_.w.size(), "bimodal density: dimension mismatch");
    return -0.5 * x.squaredNorm() + bimodal_quartic(p_, p_.w.dot(x));
  }
  double log_density_grad(const Vector& x, Vector& grad) const override {
    auto vg = bimodal_logpdf_grad(p_, x);
    grad = std::move(vg.grad);
    return vg.value;
  }

 private:
  BimodalPrior p_;
};

class TVAdapter final : public Density {
 public:
  explicit TVAdapter(SmoothedTVPrior p) : p_(p) {}
  Eigen::Index dim() const override { return static_cast<Eigen::Index>(p_.n_x) * p_.n_y; }
  double log_density(const Vector& x) const override {
    return -tv_eps_logprior_grad(p_, x).value;
  }
  double log_density_grad(const Vector& x, Vector& grad) const override {
    auto vg = tv_eps_logprior_grad(p_, x);
    grad = -vg.grad;
    return -vg.value;
  }

 private:
  SmoothedTVPrior p_;
};

}  // namespace

DensityPtr make_density(GaussianDensity g) {
  if (!(g.variance > 0)) throw ParameterError("Gaussian density: variance must be positive");
  return std::make_shared<GaussianAdapter>(std::move(g));
}
DensityPtr make_density(BimodalPrior p) { return std::make_shared<BimodalAdapter>(std::move(p)); }
DensityPtr make_density(SmoothedTVPrior p) {
  if (!(p.epsilon > 0)) throw ParameterError("TV density: epsilon must be positive");
  return std::make_shared<TVAdapter>(p);
}

}  // namespace pimh
