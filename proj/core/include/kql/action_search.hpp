#pragma once

#include "kql/qfunction.hpp"
#include "kql/rng.hpp"

namespace kql {

// Axis-aligned action bounds.
struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  void validate() const;
  Eigen::VectorXd midpoint() const { return 0.5 * (lo + hi); }
};

struct SearchConfig {
  int n_seeds = 64;         // uniform seed draws per call
  int ascent_starts = 4;    // best seeds refined by ascent
  int ascent_steps = 100;   // iteration cap per start
  double ascent_rate = 0.05;

  void validate() const;
};

struct MaximizeResult {
  Eigen::VectorXd action;
  double value = 0.0;
};

// Approximate argmax_a q(s, a) over the box: uniform seeds, then projected
// gradient ascent from the best few. The returned value is never below the
// best seed. Empty q returns the box midpoint with value 0.
MaximizeResult maximize_action(const QFunction& q, const Eigen::Ref<const Eigen::VectorXd>& s,
                               const Box& box, const SearchConfig& cfg, Rng& rng);

// Soft maximum of q(s, .) over a 1-d action interval:
//   (1/eta) * log INT_lo^hi exp(eta q(s, a)) da
// by trapezoid quadrature on a uniform grid of `points` nodes. Larger eta
// tracks the hard maximum more closely.
double softmax_value(const QFunction& q, const Eigen::Ref<const Eigen::VectorXd>& s, double lo,
                     double hi, double eta, int points);

// Normalized node weights of the same quadrature, proportional to
// exp(eta q) times the trapezoid coefficient. Sums to 1 exactly.
Eigen::VectorXd softmax_weights(const QFunction& q, const Eigen::Ref<const Eigen::VectorXd>& s,
                                double lo, double hi, double eta, int points);

}  // namespace kql
