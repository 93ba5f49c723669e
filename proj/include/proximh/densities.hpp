#pragma once

#include "proximh/common.hpp"

#include <memory>
#include <optional>
#include <string>

namespace pimh {

/// Log-density (up to an additive constant) with gradient.
class Density {
 public:
  virtual ~Density() = default;
  virtual Eigen::Index dim() const = 0;
  virtual double log_density(const Vector& x) const = 0;
  /// Returns the log-density and writes its gradient into `grad`.
  virtual double log_density_grad(const Vector& x, Vector& grad) const = 0;
};

using DensityPtr = std::shared_ptr<const Density>;

struct ValueGrad {
  double value = 0.0;
  Vector grad;
};

// --- isotropic Gaussian ----------------------------------------------------

struct GaussianDensity {
  Vector mean;
  double variance = 1.0;
};

ValueGrad gaussian_logpdf_grad(const GaussianDensity& g, const Vector& x);

// --- bimodal prior ---------------------------------------------------------
// log p(x) = -½‖x‖² - τ (wᵀx - c)²(wᵀx + c)²

struct BimodalPrior {
  Vector w;
  double c = 2.0;
  double tau = 0.3;
};

BimodalPrior make_bimodal_prior(Vector w, double c, double tau);
ValueGrad bimodal_logpdf_grad(const BimodalPrior& p, const Vector& x);
/// The one-dimensional factor exp(-τ(t-c)²(t+c)²) in log form.
double bimodal_quartic(const BimodalPrior& p, double t);

// --- smoothed total variation ----------------------------------------------
// λ Σ_cells sqrt(‖∇_h x‖² + ε²); images are row-major with n_x columns.

struct SmoothedTVPrior {
  int n_x = 1;
  int n_y = 1;
  double epsilon = 1e-3;
  double weight = 1.0;
};

/// Negative log prior and its gradient.
ValueGrad tv_eps_logprior_grad(const SmoothedTVPrior& p, const Vector& x);

// --- fixed synthetic generator ---------------------------------------------

enum class Activation { tanh, identity };

struct SyntheticGenerator {
  std::vector<Matrix> weights;  // layer l maps width[l] -> width[l+1]
  std::vector<Vector> biases;
  Activation activation = Activation::tanh;

  Eigen::Index input_dim() const { return weights.front().cols(); }
  Eigen::Index output_dim() const { return weights.back().rows(); }
};

/// Seeded He-style initialization; the activation is applied after every
/// layer except the last.
SyntheticGenerator make_generator(Eigen::Index d_z, const std::vector<Eigen::Index>& hidden,
                                  Eigen::Index d_x, Activation activation, std::uint64_t seed);

struct GeneratorEval {
  Vector x;
  std::optional<Vector> jvp;
  std::optional<Vector> vjp;
};

GeneratorEval generator_apply_jvp_vjp(const SyntheticGenerator& g, const Vector& z,
                                      const Vector* v = nullptr, const Vector* w = nullptr);

/// Dense Jacobian (d_x × d_z), column by column through forward mode.
Matrix generator_jacobian(const SyntheticGenerator& g, const Vector& z);

void save_generator(const std::string& prefix, const SyntheticGenerator& g);
SyntheticGenerator load_generator(const std::string& prefix);

// --- Density adapters ------------------------------------------------------

DensityPtr make_density(GaussianDensity g);
DensityPtr make_density(BimodalPrior p);
/// Log-density -TV_ε.
DensityPtr make_density(SmoothedTVPrior p);

}  // namespace pimh
