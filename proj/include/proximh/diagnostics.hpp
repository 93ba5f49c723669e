#pragma once

#include "proximh/common.hpp"
#include "proximh/samplers.hpp"

#include <optional>

namespace pimh {

inline constexpr int kHistogramBins = 61;
inline constexpr double kHistogramLo = -4.0;
inline constexpr double kHistogramHi = 4.0;

struct DiagnosticsReport {
  double acceptance_rate = 0.0;
  std::vector<Eigen::Index> checkpoints;  // number of states averaged
  std::vector<double> relative_mean_error;
  std::vector<double> relative_second_moment_error;
  std::vector<Eigen::Index> projection_histogram;  // empty unless w is given
  double positive_mode_fraction = 0.0;             // share of states with wᵀx > 0
};

/// Log-spaced integers covering [first, last], deduplicated.
std::vector<Eigen::Index> log_checkpoints(Eigen::Index first, Eigen::Index last, int count);

DiagnosticsReport compute_diagnostics(const ChainRecord& chain, const Vector& reference_mean,
                                      const Vector& reference_second_moments,
                                      const std::optional<Vector>& w = std::nullopt,
                                      int n_checkpoints = 25);

std::vector<Eigen::Index> projection_histogram(const StateMatrix& states, const Vector& w);

/// Split potential scale reduction over several equal-length chains
/// (each row of `chains[c]` is one state of one scalar summary).
double split_rhat(const std::vector<Vector>& chains);

/// Spearman rank correlation with average ranks for ties.
double spearman(const Vector& a, const Vector& b);

}  // namespace pimh
