#pragma once

#include "proximh/common.hpp"
#include "proximh/samplers.hpp"

#include <functional>
#include <string>

namespace pimh::oracle {

// --- finite state spaces ----------------------------------------------------

/// IMH transition matrix on atoms: P_ij = g_j min(1, (π_j/g_j)/(π_i/g_i)).
Matrix imh_transition_matrix(const Vector& target, const Vector& proposal);

/// Row distribution after n steps: init · Pⁿ.
Vector propagate(const Matrix& p, const Vector& init, int n);

double total_variation(const Vector& p, const Vector& q);

/// Draws atom indices with the given probabilities; x = (atom value).
class DiscreteProposal final : public ProposalSource {
 public:
  DiscreteProposal(Vector atoms, Vector probs);
  ProposalKind kind() const override { return ProposalKind::gaussian_direct; }
  Eigen::Index dim() const override { return 1; }
  ProposalDraw draw(Rng& rng) const override;

 private:
  Vector atoms_;
  Vector cdf_;
};

struct KernelCheck {
  Vector exact;
  Vector empirical;
  double tv = 0.0;
};

/// n-step law of imh_run on atoms (chain started from one proposal draw),
/// exact versus `replicas` independent chains.
KernelCheck imh_kernel_check(const Vector& atoms, const Vector& target, const Vector& proposal,
                             int n_steps, Eigen::Index replicas, std::uint64_t seed);

/// n-step law of mala_run on N(0,1) from x0, computed by propagating the
/// kernel on a fine quadrature grid (rejections as point masses) and binned
/// into the intervals separated by `edges`; compared with `replicas` chains.
KernelCheck mala_kernel_check(double step_size, double x0, int n_steps, const Vector& edges,
                              Eigen::Index replicas, std::uint64_t seed);

// --- finite differences -----------------------------------------------------

/// (f(x + εv) − f(x − εv))/(2ε).
double central_difference(const std::function<double(const Vector&)>& f, const Vector& x,
                          const Vector& direction, double eps);

// --- suites used by the command-line tool ------------------------------------

struct SuiteResult {
  bool passed = true;
  std::vector<std::string> lines;
};

SuiteResult kl_suite(std::uint64_t seed);
SuiteResult gradient_suite(std::uint64_t seed);
SuiteResult kernel_suite(std::uint64_t seed);

}  // namespace pimh::oracle
