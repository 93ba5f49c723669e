#include "proximh/bimodal.hpp"

#include <algorithm>
#include <cmath>

namespace pimh {

BimodalLinearPosterior::BimodalLinearPosterior(const Matrix& a, double sigma, const Vector& y,
                                               const BimodalPrior& prior, int grid_points)
    : a_(a), sigma_(sigma), y_(y), prior_(prior) {
  require_dims(a.rows() == y.size() && a.cols() == prior.w.size(),
               "bimodal posterior: A, y and w do not match");
  if (!(sigma > 0)) throw ParameterError("bimodal posterior: sigma must be positive");
  if (grid_points < 101) throw ParameterError("bimodal posterior: grid too coarse");
  const Eigen::Index d = a.cols();
  const double s2 = sigma * sigma;
  Matrix precision = a.transpose() * a / s2;
  precision.diagonal().array() += 1.0;
  gauss_cov_ = precision.llt().solve(Matrix::Identity(d, d));
  gauss_cov_ = 0.5 * (gauss_cov_ + gauss_cov_.transpose()).eval();
  gauss_mean_ = gauss_cov_ * (a.transpose() * y) / s2;
  sampler_ = std::make_shared<GaussianSampler>(gauss_mean_, gauss_cov_);
  cov_w_ = gauss_cov_ * prior_.w;
  v_ = prior_.w.dot(cov_w_);
  t_mean_ = prior_.w.dot(gauss_mean_);

  const double sd = std::sqrt(v_);
  const double lo = std::max(t_mean_ - 14.0 * sd, -prior_.c - 8.0);
  const double hi = std::min(t_mean_ + 14.0 * sd, prior_.c + 8.0);
  if (!(hi > lo)) throw NumericalError("bimodal posterior: empty projection grid");
  t_grid_ = Vector::LinSpaced(grid_points, lo, hi);
  Vector logp(grid_points);
  for (int i = 0; i < grid_points; ++i) {
    const double t = t_grid_[i];
    logp[i] = -0.5 * (t - t_mean_) * (t - t_mean_) / v_ + bimodal_quartic(prior_, t);
  }
  t_pdf_ = (logp.array() - logp.maxCoeff()).exp();
  const double dt = t_grid_[1] - t_grid_[0];
  t_cdf_.resize(grid_points);
  t_cdf_[0] = 0.0;
  for (int i = 1; i < grid_points; ++i) t_cdf_[i] = t_cdf_[i - 1] + 0.5 * dt * (t_pdf_[i - 1] + t_pdf_[i]);
  const double z = t_cdf_[grid_points - 1];
  t_pdf_ /= z;
  t_cdf_ /= z;

  // trapezoid moments of the t-marginal
  double m1 = 0.0, m2 = 0.0, pos = 0.0;
  for (int i = 1; i < grid_points; ++i) {
    const double t0 = t_grid_[i - 1], t1 = t_grid_[i];
    const double f0 = t_pdf_[i - 1], f1 = t_pdf_[i];
    m1 += 0.5 * dt * (t0 * f0 + t1 * f1);
    m2 += 0.5 * dt * (t0 * t0 * f0 + t1 * t1 * f1);
    if (t0 >= 0.0) {
      pos += 0.5 * dt * (f0 + f1);
    } else if (t1 > 0.0) {
      // linear density on the straddling interval
      const double frac = t1 / dt;
      const double f_at0 = f0 + (f1 - f0) * (1.0 - frac);
      pos += 0.5 * t1 * (f_at0 + f1);
    }
  }
  e_t_ = m1;
  var_t_ = m2 - m1 * m1;
  p_pos_ = pos;
}

double BimodalLinearPosterior::log_density_grad(const Vector& x, Vector& grad) const {
  const Vector r = y_ - a_ * x;
  const double s2 = sigma_ * sigma_;
  auto prior = bimodal_logpdf_grad(prior_, x);
  grad = prior.grad + a_.transpose() * r / s2;
  return prior.value - 0.5 * r.squaredNorm() / s2;
}

double BimodalLinearPosterior::log_density(const Vector& x) const {
  Vector g;
  return log_density_grad(x, g);
}

Vector BimodalLinearPosterior::draw(Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  const auto it = std::upper_bound(t_cdf_.begin(), t_cdf_.end(), u);
  Eigen::Index i = std::clamp<Eigen::Index>(it - t_cdf_.begin(), 1, t_cdf_.size() - 1);
  const double c0 = t_cdf_[i - 1], c1 = t_cdf_[i];
  const double frac = c1 > c0 ? (u - c0) / (c1 - c0) : 0.5;
  const double t = t_grid_[i - 1] + frac * (t_grid_[i] - t_grid_[i - 1]);
  const Vector x0 = sampler_->draw(rng);
  return x0 + cov_w_ * ((t - prior_.w.dot(x0)) / v_);
}

Vector BimodalLinearPosterior::mean() const { return gauss_mean_ + cov_w_ * ((e_t_ - t_mean_) / v_); }

Vector BimodalLinearPosterior::second_moments() const {
  const Vector m = mean();
  const Vector cw2 = cov_w_.array().square();
  const Vector var = gauss_cov_.diagonal() - cw2 / v_ + cw2 * (var_t_ / (v_ * v_));
  return var + m.cwiseProduct(m);
}

double BimodalLinearPosterior::positive_mode_mass() const { return p_pos_; }

}  // namespace pimh
