#include "proximh/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pimh {

std::vector<Eigen::Index> log_checkpoints(Eigen::Index first, Eigen::Index last, int count) {
  if (first < 1 || last < first || count < 1) throw ParameterError("log_checkpoints: invalid range");
  std::vector<Eigen::Index> out;
  if (count == 1 || first == last) {
    out.push_back(last);
    return out;
  }
  const double l0 = std::log(static_cast<double>(first));
  const double l1 = std::log(static_cast<double>(last));
  for (int i = 0; i < count; ++i) {
    const double v = std::exp(l0 + (l1 - l0) * i / (count - 1));
    auto c = static_cast<Eigen::Index>(std::llround(v));
    c = std::clamp(c, first, last);
    if (out.empty() || c > out.back()) out.push_back(c);
  }
  out.back() = last;
  return out;
}

std::vector<Eigen::Index> projection_histogram(const StateMatrix& states, const Vector& w) {
  require_dims(w.size() == states.cols(), "projection_histogram: w has wrong dimension");
  std::vector<Eigen::Index> counts(kHistogramBins, 0);
  const double width = (kHistogramHi - kHistogramLo) / kHistogramBins;
  for (Eigen::Index t = 0; t < states.rows(); ++t) {
    const double p = states.row(t).dot(w.transpose());
    auto bin = static_cast<long>(std::floor((p - kHistogramLo) / width));
    bin = std::clamp<long>(bin, 0, kHistogramBins - 1);
    ++counts[static_cast<std::size_t>(bin)];
  }
  return counts;
}

DiagnosticsReport compute_diagnostics(const ChainRecord& chain, const Vector& ref_mean,
                                      const Vector& ref_m2, const std::optional<Vector>& w,
                                      int n_checkpoints) {
  const Eigen::Index n = chain.states.rows();
  const Eigen::Index d = chain.states.cols();
  require_dims(ref_mean.size() == d && ref_m2.size() == d, "compute_diagnostics: reference has wrong dimension");
  const double ref_norm = ref_mean.norm();
  if (!(ref_norm > 0)) throw ParameterError("compute_diagnostics: reference mean has zero norm");
  if ((ref_m2.array() == 0.0).any()) throw ParameterError("compute_diagnostics: zero reference second moment");

  DiagnosticsReport rep;
  rep.acceptance_rate = chain.acceptance_rate;
  rep.checkpoints = log_checkpoints(std::min<Eigen::Index>(10, n), n, n_checkpoints);

  Vector sum = Vector::Zero(d);
  Vector sum2 = Vector::Zero(d);
  std::size_t next = 0;
  for (Eigen::Index t = 0; t < n && next < rep.checkpoints.size(); ++t) {
    const Vector x = chain.states.row(t).transpose();
    sum += x;
    sum2 += x.cwiseProduct(x);
    if (t + 1 == rep.checkpoints[next]) {
      const double cnt = static_cast<double>(t + 1);
      const Vector m = sum / cnt;
      const Vector m2 = sum2 / cnt;
      rep.relative_mean_error.push_back((m - ref_mean).norm() / ref_norm);
      rep.relative_second_moment_error.push_back(
          ((m2 - ref_m2).array().abs() / ref_m2.array().abs()).mean());
      ++next;
    }
  }
  if (w) {
    rep.projection_histogram = projection_histogram(chain.states, *w);
    const Vector proj = chain.states * *w;
    rep.positive_mode_fraction =
        static_cast<double>((proj.array() > 0.0).count()) / static_cast<double>(n);
  }
  return rep;
}

double split_rhat(const std::vector<Vector>& chains) {
  if (chains.empty()) throw ParameterError("split_rhat: no chains");
  const Eigen::Index len = chains.front().size();
  const Eigen::Index half = len / 2;
  if (half < 2) throw ParameterError("split_rhat: chains too short");
  std::vector<Vector> parts;
  for (const auto& c : chains) {
    require_dims(c.size() == len, "split_rhat: chains differ in length");
    parts.push_back(c.segment(0, half));
    parts.push_back(c.segment(len - half, half));
  }
  const auto m = static_cast<double>(parts.size());
  const auto nn = static_cast<double>(half);
  Vector means(parts.size());
  Vector vars(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    means[static_cast<Eigen::Index>(i)] = parts[i].mean();
    vars[static_cast<Eigen::Index>(i)] =
        (parts[i].array() - parts[i].mean()).square().sum() / (nn - 1.0);
  }
  const double b = nn * (means.array() - means.mean()).square().sum() / (m - 1.0);
  const double wv = vars.mean();
  if (wv == 0.0) return b == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (nn - 1.0) / nn * wv + b / nn;
  return std::sqrt(var_plus / wv);
}

namespace {

Vector ranks(const Vector& v) {
  const Eigen::Index n = v.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
  Vector r(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && v[idx[static_cast<std::size_t>(j + 1)]] == v[idx[static_cast<std::size_t>(i)]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) r[idx[static_cast<std::size_t>(k)]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const Vector& a, const Vector& b) {
  require_dims(a.size() == b.size() && a.size() >= 2, "spearman: need two equal-length samples");
  const Vector ra = ranks(a).array() - ranks(a).mean();
  const Vector rb = ranks(b).array() - ranks(b).mean();
  const double den = std::sqrt(ra.squaredNorm() * rb.squaredNorm());
  if (den == 0.0) return 0.0;
  return ra.dot(rb) / den;
}

}  // namespace pimh
