#include "proximh/posteriors.hpp"

#include <cmath>

namespace pimh {

PosteriorKind parse_posterior_kind(const std::string& name) {
  if (name == "exact") return PosteriorKind::exact;
  if (name == "approx") return PosteriorKind::approx;
  if (name == "latent") return PosteriorKind::latent;
  if (name == "proximal") return PosteriorKind::proximal;
  throw ConfigError("unknown posterior kind '" + name + "'");
}

std::string to_string(PosteriorKind kind) {
  switch (kind) {
    case PosteriorKind::exact: return "exact";
    case PosteriorKind::approx: return "approx";
    case PosteriorKind::latent: return "latent";
    case PosteriorKind::proximal: return "proximal";
  }
  return "unknown";
}

void validate(const LinearInverseProblem& prob) {
  require_dims(prob.a.rows() == prob.a_tilde.rows() && prob.a.cols() == prob.a_tilde.cols(),
               "linear problem: A and Ã must share shape");
  if (!(prob.sigma > 0)) throw ParameterError("linear problem: sigma must be positive");
  check_operator(prob.a, "A");
  check_operator(prob.a_tilde, "Ã");
  if (prob.y.size() != 0) require_dims(prob.y.size() == prob.a.rows(), "linear problem: y has wrong length");
  if (prob.prior) require_dims(prob.prior->dim() == prob.a.cols(), "linear problem: prior has wrong dimension");
  if (prob.has_latent()) {
    require_dims(prob.o.cols() == prob.f.rows() && prob.f.cols() == prob.a.cols() &&
                     prob.f.rows() == prob.f_tilde.rows() && prob.f.cols() == prob.f_tilde.cols(),
                 "linear problem: O, F, F̃ shapes do not chain");
    const double scale = std::max(1.0, prob.a.cwiseAbs().maxCoeff());
    if ((prob.a - prob.o * prob.f).cwiseAbs().maxCoeff() > 1e-10 * scale ||
        (prob.a_tilde - prob.o * prob.f_tilde).cwiseAbs().maxCoeff() > 1e-10 * scale) {
      throw ParameterError("linear problem: A must equal O·F and Ã must equal O·F̃");
    }
  }
}

LinearInverseProblem make_linear_problem(Matrix o, Matrix f, Matrix f_tilde, double sigma,
                                         DensityPtr prior, bool standard_gaussian_prior, Vector y) {
  require_dims(o.cols() == f.rows() && f.rows() == f_tilde.rows() && f.cols() == f_tilde.cols(),
               "make_linear_problem: O, F, F̃ shapes do not chain");
  LinearInverseProblem p;
  p.a = o * f;
  p.a_tilde = o * f_tilde;
  p.o = std::move(o);
  p.f = std::move(f);
  p.f_tilde = std::move(f_tilde);
  p.sigma = sigma;
  p.prior = std::move(prior);
  p.standard_gaussian_prior = standard_gaussian_prior;
  p.y = std::move(y);
  validate(p);
  return p;
}

LinearInverseProblem make_linear_problem_from_operators(Matrix a, Matrix a_tilde, double sigma,
                                                        DensityPtr prior,
                                                        bool standard_gaussian_prior, Vector y) {
  LinearInverseProblem p;
  p.a = std::move(a);
  p.a_tilde = std::move(a_tilde);
  p.sigma = sigma;
  p.prior = std::move(prior);
  p.standard_gaussian_prior = standard_gaussian_prior;
  p.y = std::move(y);
  validate(p);
  return p;
}

namespace {

void require_latent(const LinearInverseProblem& prob) {
  if (!prob.has_latent()) throw UnsupportedModelError("latent posterior needs F and F̃");
  require_dims(prob.f.rows() == prob.f.cols(), "latent posterior needs square F and F̃");
}

Matrix checked_f_inverse(const Matrix& f, const std::string& name) {
  Matrix inv = checked_inverse(f, "latent posterior: " + name);
  const double err = (f * inv - Matrix::Identity(f.rows(), f.cols())).norm();
  if (!(err <= 1e-8)) throw ConditioningError("latent posterior: " + name + " inverse is inaccurate", err);
  return inv;
}

double prior_log(const LinearInverseProblem& prob, const Vector& x) {
  if (!prob.prior) throw ParameterError("linear problem has no prior");
  return prob.prior->log_density(x);
}

}  // namespace

Matrix latent_map(const LinearInverseProblem& prob) {
  require_latent(prob);
  checked_f_inverse(prob.f, "F");
  return checked_f_inverse(prob.f_tilde, "F̃") * prob.f;
}

Matrix latent_pushforward(const LinearInverseProblem& prob) {
  require_latent(prob);
  checked_f_inverse(prob.f_tilde, "F̃");
  return checked_f_inverse(prob.f, "F") * prob.f_tilde;
}

double log_likelihood(const LinearInverseProblem& prob, const Vector& predicted) {
  require_dims(prob.y.size() == predicted.size(), "log_likelihood: y and prediction lengths differ");
  return -0.5 * (prob.y - predicted).squaredNorm() / (prob.sigma * prob.sigma);
}

double log_posterior(PosteriorKind kind, const LinearInverseProblem& prob,
                     const CorrectionOperatorK* k, const Vector& x) {
  require_dims(x.size() == prob.dim(), "log_posterior: x has wrong dimension");
  switch (kind) {
    case PosteriorKind::exact:
      return log_likelihood(prob, prob.a * x) + prior_log(prob, x);
    case PosteriorKind::approx:
      return log_likelihood(prob, prob.a_tilde * x) + prior_log(prob, x);
    case PosteriorKind::latent:
      return log_likelihood(prob, prob.a * x) + prior_log(prob, latent_map(prob) * x);
    case PosteriorKind::proximal: {
      if (!k) throw ParameterError("log_posterior: proximal posterior needs K");
      require_dims(k->k_inverse.cols() == x.size(), "log_posterior: K has wrong dimension");
      const Vector xt = k->k_inverse * x;
      return log_likelihood(prob, prob.a_tilde * xt) + prior_log(prob, xt);
    }
  }
  return 0.0;
}

namespace {

struct MeanCov {
  Matrix mean_map;
  Matrix cov;
};

// A† = Aᵀ(AAᵀ + σ²I)⁻¹ and Σ = I − A†A = σ²(AᵀA + σ²I)⁻¹.
MeanCov standard_form(const Matrix& a, double sigma) {
  const double s2 = sigma * sigma;
  Matrix outer = a * a.transpose();
  outer.diagonal().array() += s2;
  MeanCov mc;
  mc.mean_map = outer.llt().solve(a).transpose();
  Matrix inner = a.transpose() * a;
  inner.diagonal().array() += s2;
  mc.cov = s2 * inner.llt().solve(Matrix::Identity(a.cols(), a.cols()));
  return mc;
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

GaussianPosteriorForm gaussian_posterior_form(PosteriorKind kind, const LinearInverseProblem& prob,
                                              const CorrectionOperatorK* k) {
  if (!prob.standard_gaussian_prior) {
    throw UnsupportedModelError("Gaussian closed forms need a standard Gaussian prior");
  }
  GaussianPosteriorForm form;
  form.variant = kind;
  switch (kind) {
    case PosteriorKind::exact: {
      auto mc = standard_form(prob.a, prob.sigma);
      form.mean_map = std::move(mc.mean_map);
      form.covariance = std::move(mc.cov);
      break;
    }
    case PosteriorKind::approx: {
      auto mc = standard_form(prob.a_tilde, prob.sigma);
      form.mean_map = std::move(mc.mean_map);
      form.covariance = std::move(mc.cov);
      break;
    }
    case PosteriorKind::latent: {
      const Matrix push = latent_pushforward(prob);
      auto mc = standard_form(prob.a_tilde, prob.sigma);
      form.mean_map = push * mc.mean_map;
      form.covariance = push * mc.cov * push.transpose();
      break;
    }
    case PosteriorKind::proximal: {
      if (!k) throw ParameterError("gaussian_posterior_form: proximal form needs K");
      require_dims(k->k.rows() == prob.dim(), "gaussian_posterior_form: K has wrong dimension");
      auto mc = standard_form(prob.a_tilde, prob.sigma);
      form.mean_map = k->k * mc.mean_map;
      form.covariance = k->k * mc.cov * k->k.transpose();
      break;
    }
  }
  form.covariance = symmetrized(form.covariance);
  return form;
}

Matrix symmetric_sqrt(const Matrix& cov, double psd_floor) {
  require_dims(cov.rows() == cov.cols(), "symmetric_sqrt: covariance must be square");
  if (!cov.allFinite()) throw ParameterError("symmetric_sqrt: covariance has non-finite entries");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(cov));
  if (es.info() != Eigen::Success) throw ConditioningError("symmetric_sqrt: eigensolver failed", 0.0);
  Vector ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < 0) {
      if (ev[i] < -psd_floor * scale) {
        throw ConditioningError("covariance is not positive semidefinite", ev[i]);
      }
      ev[i] = 0.0;
    }
  }
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

GaussianSampler::GaussianSampler(Vector m, const Matrix& covariance)
    : mean(std::move(m)), root(symmetric_sqrt(covariance)) {
  require_dims(root.rows() == mean.size(), "GaussianSampler: mean and covariance sizes differ");
}

Matrix sample_gaussian_posterior(const GaussianPosteriorForm& form, const Vector& y, Eigen::Index n,
                                 std::uint64_t seed) {
  require_dims(form.mean_map.cols() == y.size(), "sample_gaussian_posterior: y has wrong length");
  if (n < 0) throw ParameterError("sample_gaussian_posterior: negative sample count");
  GaussianSampler sampler(form.mean_map * y, form.covariance);
  Rng rng = make_stream(seed, 0);
  Matrix out(sampler.mean.size(), n);
  for (Eigen::Index j = 0; j < n; ++j) out.col(j) = sampler.draw(rng);
  return out;
}

}  // namespace pimh
