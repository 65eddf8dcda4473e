#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "kql/trainer.hpp"

namespace kql {

// Per-step and per-interval metrics as CSV: one header line, then one row
// per record, doubles at full round-trip precision. Writers are byte
// deterministic for identical inputs.
void write_steps_csv(std::ostream& os, const std::vector<StepRecord>& steps);
std::vector<StepRecord> read_steps_csv(std::istream& is);
void write_intervals_csv(std::ostream& os, const std::vector<IntervalRecord>& intervals);
std::vector<IntervalRecord> read_intervals_csv(std::istream& is);

// Versioned run summary: config echo, per-seed counters, the final-window
// order/loss/reward triple, and wall-clock timing. Timing is the one
// intentionally nondeterministic block, so it lives here and never in the
// CSVs.
void write_summary_json(std::ostream& os, const RunConfig& cfg,
                        const std::vector<TrainResult>& results, const SweepSummary& summary);

// Heatmap grids over a 2-d state box for a 1-d action space:
// value(s) = max over a uniform action grid of q(s, a), policy(s) = the
// argmax action (ties to the lower action index). Header line with the
// axes, then grid_n rows of grid_n values; row i fixes state dim 1 at its
// i-th grid value, column j sweeps state dim 0.
void write_value_policy_grids(std::ostream& value_os, std::ostream& policy_os,
                              const QFunction& q,
                              const Eigen::Ref<const Eigen::VectorXd>& state_lo,
                              const Eigen::Ref<const Eigen::VectorXd>& state_hi,
                              double action_lo, double action_hi, int grid_n, int action_n);

// One row per dictionary atom: full coordinates then the weight.
void write_dict_points(std::ostream& os, const QFunction& q);

}  // namespace kql
