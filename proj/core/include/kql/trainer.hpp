#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kql/envs.hpp"
#include "kql/learner.hpp"
#include "kql/policy.hpp"
#include "kql/replay.hpp"

namespace kql {

enum class PolicyMode { exploratory, rho_greedy };

const char* to_string(PolicyMode m);
PolicyMode policy_mode_from_string(const std::string& s);

struct RunConfig {
  std::string env = "mountain_car";
  LearnerVariant algorithm = LearnerVariant::hybrid;
  PolicyMode policy = PolicyMode::rho_greedy;
  long total_steps = 150000;
  std::vector<unsigned long long> seeds = {1};

  long eval_every = 5000;        // 0 disables held-out Bellman evaluation
  long eval_trajectories = 5;
  long interval_steps = 5000;    // reward-averaging window
  long checkpoint_every = 0;     // 0 disables periodic checkpoints

  KernelConfig kernel;           // bandwidths over (state, action), in that order
  LearnerConfig learner;
  SearchConfig search;
  ReplayConfig replay;
  RhoSchedule rho;

  // Also enforces the combinations that make sense: a pure exploratory
  // policy pairs only with the kq update (hybrid would never branch and
  // semigradient assumes greedy actions).
  void validate() const;

  // learner with the top-level algorithm choice folded in
  LearnerConfig learner_config_with_variant() const {
    LearnerConfig lc = learner;
    lc.variant = algorithm;
    return lc;
  }
};

// Table-style operating point for the named environment: bandwidths, alpha,
// beta, compression constant, horizon.
RunConfig default_run_config(const std::string& env);

std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text);

struct StepRecord {
  long t = 0;
  int order = 0;         // model order after this step's compression
  double epsilon = 0.0;  // compression budget this step
  double delta = 0.0;
  double z = 0.0;
  int removals = 0;
  double reward = 0.0;
  bool exploratory = false;
  bool episode_done = false;
};

struct IntervalRecord {
  long t_end = 0;              // steps completed at interval close
  double avg_reward = 0.0;     // mean return of episodes completed inside; carried
                               // forward when none completed
  double raw_bellman = 0.0;    // latest held-out evaluation (NaN before the first)
  double norm_bellman = 0.0;
  int order = 0;
  bool denom_floored = false;
};

struct RunMetrics {
  std::vector<StepRecord> steps;
  std::vector<IntervalRecord> intervals;
  long episodes = 0;
  double total_reward = 0.0;
  long appended_atoms = 0;
  long removed_atoms = 0;
  long aborted_compressions = 0;
  long stale_priority_updates = 0;
};

struct EvalResult {
  double raw = 0.0;
  double normalized = 0.0;
  bool denom_floored = false;  // ||q||_H under the 1e-12 floor
};

// Greedy rollouts on a fresh environment; for every visited (s, a) the
// one-step residual r + discount * max_a' q(s', a') - q(s, a) enters
// raw = (1/2N) sum residual^2; normalized divides by max(||q||_H, 1e-12).
EvalResult eval_bellman_error(const QFunction& q, std::shared_ptr<const EnvModel> model,
                              int n_traj, const SearchConfig& search, double discount,
                              Rng& rng);
EvalResult eval_bellman_error(const QFunction& q, const std::string& env_name, int n_traj,
                              const SearchConfig& search, double discount, Rng& rng);

struct TrainHooks {
  std::function<void(long t, const Learner::Outcome&)> on_step;
  Learner::CompressHook compress_hook;  // forwarded to the learner
};

struct TrainResult {
  QFunction q;
  RunMetrics metrics;
  unsigned long long seed = 0;
  double wall_seconds = 0.0;  // never written into deterministic metrics files
};

// Runs total_steps environment steps for one seed. If checkpoint_path is
// nonempty, a full-state checkpoint is written there every checkpoint_every
// steps (and kept on error).
TrainResult train(const RunConfig& cfg, unsigned long long seed, const TrainHooks& hooks = {},
                  const std::string& checkpoint_path = "");

// Continues a checkpointed run to cfg.total_steps. The returned metrics
// cover the whole run from step 0 and match an uninterrupted one bit for
// bit.
TrainResult resume_train(const RunConfig& cfg, const std::string& checkpoint_path,
                         const TrainHooks& hooks = {});

struct AggregateSeries {
  std::vector<long> t;
  std::vector<double> mean;
  std::vector<double> stddev;  // population
};

struct SweepSummary {
  int n_seeds = 0;
  AggregateSeries order;         // per step
  AggregateSeries reward;        // per interval
  AggregateSeries norm_bellman;  // per interval
  // Means over the final 10% of steps, across seeds.
  double final_order = 0.0;
  double final_loss = 0.0;
  double final_reward = 0.0;
};

// All runs must share the step/interval grids (same config, different
// seeds).
SweepSummary aggregate_seeds(const std::vector<RunMetrics>& runs);

}  // namespace kql
