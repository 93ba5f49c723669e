#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pimh {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Random stream used everywhere in the library. Every consumer takes an
/// explicit stream so that parallel workers never share state.
using Rng = std::mt19937_64;

/// Independent stream `stream_id` derived from a base seed.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream_id = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32), 0x9e3779b9u};
  return Rng(seq);
}

inline Vector standard_normal(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = nd(rng);
  return z;
}

inline Matrix standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  // column-major fill order is part of the reproducibility contract
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

// ---------------------------------------------------------------------------
// Errors. Every failure mode named by the library maps onto one of these; the
// CLI turns ConfigError into exit code 2 and NumericalError subclasses into 3.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ParameterError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConditioningError : public NumericalError {
 public:
  ConditioningError(const std::string& what, double condition)
      : NumericalError(what + " (condition estimate " + std::to_string(condition) + ")"),
        condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

class SolverError : public NumericalError {
 public:
  SolverError(const std::string& what, std::vector<double> history)
      : NumericalError(what), history_(std::move(history)) {}
  const std::vector<double>& history() const { return history_; }
  double last_residual() const { return history_.empty() ? 0.0 : history_.back(); }

 private:
  std::vector<double> history_;
};

class StateError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class CapacityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class UnsupportedModelError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace pimh
