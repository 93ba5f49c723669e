#include "proximh/bimodal.hpp"
#include "proximh/diagnostics.hpp"

#include <doctest.h>

#include <numeric>

using namespace pimh;

TEST_CASE("log_checkpoints") {
  const auto c = log_checkpoints(10, 20000, 25);
  CHECK(c.front() == 10);
  CHECK(c.back() == 20000);
  CHECK(std::is_sorted(c.begin(), c.end()));
  CHECK(std::adjacent_find(c.begin(), c.end()) == c.end());
  for (std::size_t i = 2; i < c.size(); ++i) {
    const double r0 = static_cast<double>(c[i - 1]) / static_cast<double>(c[i - 2]);
    const double r1 = static_cast<double>(c[i]) / static_cast<double>(c[i - 1]);
    CHECK(r1 == doctest::Approx(r0).epsilon(0.1));
  }
  CHECK(log_checkpoints(5, 5, 10) == std::vector<Eigen::Index>{5});
  CHECK_THROWS_AS(log_checkpoints(0, 10, 3), ParameterError);
}

TEST_CASE("compute_diagnostics on a constant chain") {
  ChainRecord rec;
  const Vector mu = Vector::LinSpaced(4, 1.0, 2.0);
  rec.states = mu.transpose().replicate(501, 1);
  rec.accepted.assign(500, false);
  rec.acceptance_rate = 0.0;
  Vector w = Vector::Ones(4).normalized();
  const auto rep = compute_diagnostics(rec, mu, mu.array().square(), w);
  REQUIRE(rep.checkpoints.size() == rep.relative_mean_error.size());
  REQUIRE(rep.checkpoints.size() == rep.relative_second_moment_error.size());
  for (double e : rep.relative_mean_error) CHECK(e < 1e-13);
  for (double e : rep.relative_second_moment_error) CHECK(e < 1e-13);
  CHECK(rep.checkpoints.front() == 10);
  CHECK(rep.checkpoints.back() == 501);
  const auto total = std::accumulate(rep.projection_histogram.begin(), rep.projection_histogram.end(), Eigen::Index{0});
  CHECK(total == 501);
  CHECK(rep.positive_mode_fraction == 1.0);
  CHECK_THROWS(compute_diagnostics(rec, Vector::Zero(4), mu, std::nullopt));
}

TEST_CASE("replicated samplers agree on their final error") {
  GaussianDirectSource src(Vector::Constant(3, 1.0), 2.0 * Matrix::Identity(3, 3));
  const LogWeight w = [](const ProposalDraw& d) {
    return -0.5 * (d.x.array() - 1.0).square().sum() + 0.25 * (d.x.array() - 1.0).square().sum();
  };
  const Vector mu = Vector::Constant(3, 1.0);
  const Vector m2 = Vector::Constant(3, 2.0);
  Vector a(8), b(8);
  for (int s = 0; s < 8; ++s) {
    a[s] = compute_diagnostics(imh_run(src, w, 4000, 100 + s), mu, m2).relative_mean_error.back();
    b[s] = compute_diagnostics(imh_run(src, w, 4000, 200 + s), mu, m2).relative_mean_error.back();
  }
  const auto sd = [](const Vector& v) { return std::sqrt((v.array() - v.mean()).square().sum() / (v.size() - 1)); };
  const double pooled = std::sqrt(0.5 * (sd(a) * sd(a) + sd(b) * sd(b)));
  CHECK(std::abs(a.mean() - b.mean()) <= 3.0 * pooled);
}

TEST_CASE("split_rhat") {
  Rng rng = make_stream(1);
  std::vector<Vector> mixed{standard_normal(rng, 2000), standard_normal(rng, 2000), standard_normal(rng, 2000)};
  CHECK(split_rhat(mixed) == doctest::Approx(1.0).epsilon(0.02));
  std::vector<Vector> stuck{standard_normal(rng, 2000), (standard_normal(rng, 2000).array() + 3.0).matrix()};
  CHECK(split_rhat(stuck) > 1.5);
}

TEST_CASE("spearman") {
  Vector a(5), b(5), c(5), t(4), u(4);
  a << 1, 2, 3, 4, 5;
  b << 10, 20, 25, 40, 1000;
  c << 5, 4, 3, 2, 1;
  CHECK(spearman(a, b) == doctest::Approx(1.0));
  CHECK(spearman(a, c) == doctest::Approx(-1.0));
  t << 1, 2, 2, 3;
  u << 1, 2, 3, 4;
  // average ranks (1, 2.5, 2.5, 4) against (1, 2, 3, 4)
  CHECK(spearman(t, u) == doctest::Approx(4.5 / std::sqrt(4.5 * 5.0)));
}

TEST_CASE("bimodal posterior sampler matches its own moments") {
  Rng rng = make_stream(5);
  const Eigen::Index d = 6;
  Vector w = standard_normal(rng, d);
  w.normalize();
  const Matrix a = standard_normal(rng, 3, d);
  const auto prior = make_bimodal_prior(w, 2.0, 0.3);
  const Vector y = a * (2.0 * w) + 0.3 * standard_normal(rng, 3);
  const BimodalLinearPosterior post(a, 0.5, y, prior);

  const Eigen::Index n = 100000;
  Vector sum = Vector::Zero(d), sum2 = Vector::Zero(d);
  double pos = 0.0;
  Rng draws = make_stream(6);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector x = post.draw(draws);
    sum += x;
    sum2 += x.array().square().matrix();
    pos += w.dot(x) > 0 ? 1.0 : 0.0;
  }
  const Vector m = sum / n;
  const Vector m2 = sum2 / n;
  const Vector sd = (m2.array() - m.array().square()).sqrt();
  for (Eigen::Index i = 0; i < d; ++i) CHECK(std::abs(m[i] - post.mean()[i]) <= 4.0 * sd[i] / std::sqrt(double(n)));
  CHECK((m2 - post.second_moments()).norm() <= 0.02 * post.second_moments().norm());
  CHECK(pos / n == doctest::Approx(post.positive_mode_mass()).epsilon(0.02));

  Vector grad;
  const Vector x = standard_normal(rng, d);
  const double v = post.log_density_grad(x, grad);
  const Vector dir = standard_normal(rng, d).normalized();
  const double h = 1e-5;
  const double fd = (post.log_density(x + h * dir) - post.log_density(x - h * dir)) / (2 * h);
  CHECK(fd == doctest::Approx(grad.dot(dir)).epsilon(1e-6));
  CHECK(v == post.log_density(x));
}
