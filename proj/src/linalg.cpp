#include "proximh/linalg.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace pimh {

void check_operator(const DenseOperator& m, const std::string& name) {
  if (!m.allFinite()) throw ParameterError(name + ": operator has non-finite entries");
}

Matrix checked_inverse(const Matrix& m, const std::string& what, double min_rcond) {
  require_dims(m.rows() == m.cols(), what + ": inverse of a non-square matrix");
  Eigen::PartialPivLU<Matrix> lu(m);
  const Vector pivots = lu.matrixLU().diagonal().cwiseAbs();
  // rcond() is unreliable once a pivot is exactly zero
  const double rcond = pivots.minCoeff() > 0 ? lu.rcond() : 0.0;
  if (!(rcond >= min_rcond)) {
    throw ConditioningError(what + ": matrix is numerically singular",
                            rcond > 0 ? 1.0 / rcond : std::numeric_limits<double>::infinity());
  }
  return lu.inverse();
}

Matrix regularized_pseudoinverse(const Matrix& a, double beta) {
  if (!(beta > 0)) throw ParameterError("regularized_pseudoinverse: beta must be positive");
  check_operator(a, "A");
  Matrix normal = a.transpose() * a;
  normal.diagonal().array() += beta;
  // SPD for beta > 0
  return normal.llt().solve(a.transpose());
}

CorrectionOperatorK build_k(const Matrix& a, const Matrix& a_tilde, double beta) {
  require_dims(a.rows() == a_tilde.rows() && a.cols() == a_tilde.cols(),
               "build_k: A and Ã must share shape");
  if (!(beta > 0)) throw ParameterError("build_k: beta must be positive");
  check_operator(a, "A");
  check_operator(a_tilde, "Ã");

  const Eigen::Index d = a.cols();
  Matrix lhs = a.transpose() * a;
  lhs.diagonal().array() += beta;
  Matrix rhs = a.transpose() * a_tilde;
  rhs.diagonal().array() += beta;

  CorrectionOperatorK out;
  out.beta = beta;
  out.k = lhs.llt().solve(rhs);

  Eigen::PartialPivLU<Matrix> lu(out.k);
  const double rcond = lu.rcond();
  const double cond = rcond > 0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  if (!(rcond >= 1e-14)) throw ConditioningError("build_k: K is numerically singular", cond);
  out.k_inverse = lu.inverse();

  const double residual =
      (out.k * out.k_inverse - Matrix::Identity(d, d)).cwiseAbs().maxCoeff();
  if (residual > 1e-10 * std::max(1.0, cond)) {
    throw ConditioningError("build_k: K·K⁻¹ deviates from identity by " + std::to_string(residual),
                            cond);
  }
  return out;
}

double spectral_norm(const Matrix& m, double tol, int max_iter) {
  if (m.size() == 0) return 0.0;
  const Eigen::Index n = m.cols();
  Vector v(n);
  // deterministic, generic start vector
  for (Eigen::Index i = 0; i < n; ++i) v[i] = 1.0 + 0.01 * std::sin(1.0 + static_cast<double>(i));
  v.normalize();

  double sigma = (m * v).norm();
  if (sigma == 0.0) {
    // the start vector may sit in the null space; fall back to the largest column
    Eigen::Index col = 0;
    m.colwise().norm().maxCoeff(&col);
    v.setZero();
    v[col] = 1.0;
    sigma = (m * v).norm();
    if (sigma == 0.0) return 0.0;
  }
  for (int it = 0; it < max_iter; ++it) {
    Vector w = m.transpose() * (m * v);
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    v = w / wn;
    const double next = (m * v).norm();
    if (std::abs(next - sigma) <= tol * next) return next;
    sigma = next;
  }
  return sigma;
}

double condition_number(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double smin = s[s.size() - 1];
  return smin > 0 ? s[0] / smin : std::numeric_limits<double>::infinity();
}

Matrix random_orthogonal(Eigen::Index d, Rng& rng) {
  Matrix g = standard_normal(rng, d, d);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

Matrix well_conditioned_gaussian(Eigen::Index rows, Eigen::Index cols, double max_condition,
                                 Rng& rng, int max_attempts) {
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Matrix o = standard_normal(rng, rows, cols);
    if (condition_number(o) <= max_condition) return o;
  }
  throw ParameterError("well_conditioned_gaussian: no draw met the condition bound " +
                       std::to_string(max_condition) + " for shape " + std::to_string(rows) + "x" +
                       std::to_string(cols));
}

PerturbationKind parse_perturbation_kind(const std::string& name) {
  if (name == "multiplicative") return PerturbationKind::multiplicative;
  if (name == "additive_lowrank") return PerturbationKind::additive_lowrank;
  if (name == "truncation") return PerturbationKind::truncation;
  throw ConfigError("unknown perturbation kind '" + name + "'");
}

std::string to_string(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::multiplicative: return "multiplicative";
    case PerturbationKind::additive_lowrank: return "additive_lowrank";
    case PerturbationKind::truncation: return "truncation";
  }
  return "unknown";
}

TestOperators make_test_operator(PerturbationKind kind, Eigen::Index d_x, Eigen::Index d_y,
                                 const PerturbationParams& params, std::uint64_t seed) {
  if (d_x < 1 || d_y < 1 || d_y > d_x) {
    throw ParameterError("make_test_operator: need 1 <= d_y <= d_x");
  }
  switch (kind) {
    case PerturbationKind::multiplicative:
      if (!(params.alpha_minus > 0 && params.alpha_minus <= 1 && params.alpha_plus >= 1)) {
        throw ParameterError("make_test_operator: multiplicative needs 0 < alpha_minus <= 1 <= alpha_plus");
      }
      break;
    case PerturbationKind::additive_lowrank:
      if (!(params.epsilon >= 0) || params.rank < 1) {
        throw ParameterError("make_test_operator: additive_lowrank needs epsilon >= 0 and rank >= 1");
      }
      break;
    case PerturbationKind::truncation:
      if (!(params.threshold > 0)) {
        throw ParameterError("make_test_operator: truncation threshold must be positive");
      }
      break;
  }

  Rng rng = make_stream(seed, 0);
  TestOperators out;
  out.spectrum.v = random_orthogonal(d_x, rng);
  out.spectrum.s.resize(d_x);
  for (Eigen::Index i = 0; i < d_x; ++i) {
    out.spectrum.s[i] = std::pow(static_cast<double>(i + 1), -params.decay_exponent);
  }
  const Matrix& v = out.spectrum.v;
  const Vector& s = out.spectrum.s;
  out.f = v * s.asDiagonal() * v.transpose();
  out.o = well_conditioned_gaussian(d_y, d_x, params.max_observation_condition, rng);

  switch (kind) {
    case PerturbationKind::multiplicative: {
      std::uniform_real_distribution<double> ud(params.alpha_minus, params.alpha_plus);
      Vector st(d_x);
      for (Eigen::Index i = 0; i < d_x; ++i) {
        const double alpha = params.alpha_minus == params.alpha_plus ? params.alpha_minus : ud(rng);
        st[i] = alpha * s[i];
      }
      out.f_tilde = params.alpha_minus == 1.0 && params.alpha_plus == 1.0
                        ? out.f
                        : Matrix(v * st.asDiagonal() * v.transpose());
      break;
    }
    case PerturbationKind::additive_lowrank: {
      Matrix u1 = standard_normal(rng, d_x, params.rank);
      Matrix u2 = standard_normal(rng, d_x, params.rank);
      out.f_tilde = out.f + params.epsilon * u1 * u2.transpose();
      break;
    }
    case PerturbationKind::truncation: {
      Vector st = s;
      bool truncated = false;
      for (Eigen::Index i = 0; i < d_x; ++i) {
        if (!(s[i] > params.threshold)) {
          st[i] = 0.0;
          truncated = true;
        }
      }
      out.f_tilde = truncated ? Matrix(v * st.asDiagonal() * v.transpose()) : out.f;
      break;
    }
  }
  return out;
}

DiscrepancyNorms discrepancy_norms(const Matrix& f, const Matrix& f_tilde,
                                   const CorrectionOperatorK& k) {
  require_dims(f.rows() == f.cols() && f.rows() == f_tilde.rows() && f.cols() == f_tilde.cols(),
               "discrepancy_norms: F and F̃ must be square and share shape");
  require_dims(k.k.rows() == f.cols(), "discrepancy_norms: K dimension mismatch");
  const Eigen::Index d = f.rows();
  const Matrix id = Matrix::Identity(d, d);

  Eigen::PartialPivLU<Matrix> lu(f_tilde);
  const double rcond = lu.rcond();
  if (!(rcond >= 1e-14)) {
    throw ConditioningError("discrepancy_norms: F̃ is singular (inverting F̃)",
                            rcond > 0 ? 1.0 / rcond : std::numeric_limits<double>::infinity());
  }
  DiscrepancyNorms out;
  out.latent_norm = spectral_norm(id - lu.solve(f));
  out.proximal_norm = spectral_norm(id - k.k_inverse);
  return out;
}

// ---------------------------------------------------------------------------
// binary container

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw ConfigError("operator container: truncated stream");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void write_operator(std::ostream& out, const Matrix& m) {
  out.write("PIMH", 4);
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_le<double>(out, m(i, j));
}

Matrix read_operator(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "PIMH", 4) != 0) {
    throw ConfigError("operator container: bad magic");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kContainerVersion) {
    throw ConfigError("operator container: unsupported version " + std::to_string(version));
  }
  const auto rows = get_le<std::uint64_t>(in);
  const auto cols = get_le<std::uint64_t>(in);
  if (rows > (1ull << 31) || cols > (1ull << 31)) throw ConfigError("operator container: bad shape");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get_le<double>(in);
  return m;
}

void save_operator(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  write_operator(out, m);
}

Matrix load_operator(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  return read_operator(in);
}

}  // namespace pimh
