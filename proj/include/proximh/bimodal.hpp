#pragma once

#include "proximh/common.hpp"
#include "proximh/densities.hpp"
#include "proximh/posteriors.hpp"

namespace pimh {

/// Posterior of y = Ax + e under the bimodal prior. It factors as a Gaussian
/// N(m, C) times exp(−τ(t² − c²)²) in t = wᵀx, so the t-marginal is
/// one-dimensional and x | t is Gaussian.
class BimodalLinearPosterior {
 public:
  BimodalLinearPosterior(const Matrix& a, double sigma, const Vector& y, const BimodalPrior& prior,
                         int grid_points = 4001);

  Eigen::Index dim() const { return gauss_mean_.size(); }
  /// Unnormalized log density −‖y − Ax‖²/(2σ²) + log p(x).
  double log_density_grad(const Vector& x, Vector& grad) const;
  double log_density(const Vector& x) const;

  /// Exact draw: t by inverse CDF on the grid, then the conditional Gaussian.
  Vector draw(Rng& rng) const;

  Vector mean() const;
  /// E[x_i²] per component.
  Vector second_moments() const;
  /// P(wᵀx > 0).
  double positive_mode_mass() const;
  const Vector& w() const { return prior_.w; }

 private:
  Matrix a_;
  double sigma_;
  Vector y_;
  BimodalPrior prior_;
  Vector gauss_mean_;
  Matrix gauss_cov_;
  std::shared_ptr<GaussianSampler> sampler_;
  Vector cov_w_;
  double v_ = 1.0;
  double t_mean_ = 0.0;
  Vector t_grid_;
  Vector t_pdf_;
  Vector t_cdf_;
  double e_t_ = 0.0;
  double var_t_ = 0.0;
  double p_pos_ = 0.5;
};

}  // namespace pimh
