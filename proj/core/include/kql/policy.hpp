#pragma once

#include "kql/action_search.hpp"

namespace kql {

// Exploration probability: linear from rho_start at t=0 to rho_end at
// t=decay_steps, constant afterwards.
struct RhoSchedule {
  double rho_start = 1.0;
  double rho_end = 0.1;
  long decay_steps = 100000;

  void validate() const;
};

double rho_at(const RhoSchedule& sched, long t);

struct PolicyChoice {
  Eigen::VectorXd action;
  bool exploratory = false;
};

// With probability rho_at(sched, t): uniform action in the box (exploratory).
// Otherwise the maximize_action result (greedy). The flag drives the hybrid
// learner's dispatch.
PolicyChoice select_action(const QFunction& q, const Eigen::Ref<const Eigen::VectorXd>& s,
                           const RhoSchedule& sched, long t, const Box& box,
                           const SearchConfig& search, Rng& rng);

}  // namespace kql
