#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kql/komp.hpp"
#include "kql/qfunction.hpp"

namespace kql {

enum class LearnerVariant { kq, semigradient, hybrid };
enum class StepSchedule { constant, diminishing };

const char* to_string(LearnerVariant v);
const char* to_string(StepSchedule s);
LearnerVariant learner_variant_from_string(const std::string& s);
StepSchedule step_schedule_from_string(const std::string& s);

struct LearnerConfig {
  LearnerVariant variant = LearnerVariant::hybrid;
  StepSchedule schedule = StepSchedule::constant;
  double alpha = 0.25;       // step size, or its t=0 value when diminishing
  double beta = 1.0;         // averaging rate, or its t=0 value when diminishing
  double p_alpha = 0.9;      // decay exponents, diminishing schedule only
  double p_beta = 0.7;
  double discount = 0.99;
  double reg_lambda = 1e-6;  // Hilbert-norm regularization weight
  double comp_c = 1.0;       // compression budget scale: eps_t = comp_c * alpha_t^2

  void validate() const;
  std::vector<std::string> warnings() const;
};

struct StepSizes {
  double alpha = 0.0;
  double beta = 0.0;
  double epsilon = 0.0;  // compression budget for this step
};

StepSizes step_sizes(const LearnerConfig& cfg, long t);

// One on-policy sample: (s, a, r, s', a') plus how a was chosen.
// When `terminal` is set the transition ends the MDP naturally: the target
// is the reward alone and s_next / a_next are ignored. Step-cap truncations
// are not terminal.
struct SarsaTuple {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  double r = 0.0;
  Eigen::VectorXd s_next;
  Eigen::VectorXd a_next;
  bool terminal = false;
  bool exploratory = false;
};

double temporal_action_difference(const QFunction& q, const SarsaTuple& tup, double discount);
double update_z(double z, double beta, double delta);

class Learner {
 public:
  struct Outcome {
    double delta = 0.0;   // temporal difference before the update
    double z = 0.0;       // averaged difference after the update
    int appended = 0;     // atoms handed to the dictionary this step
    StepSizes sizes;
    CompressionReport report;
  };

  // Called with the function before and after compression, each step. Only
  // for instrumentation; snapshotting is too slow for normal training.
  using CompressHook = std::function<void(const QFunction& pre, const QFunction& post,
                                          const StepSizes& sizes)>;

  Learner(LearnerConfig cfg, KernelConfig kernel, int state_dim, int action_dim);

  Outcome step(const SarsaTuple& tup);

  double q_at(const Eigen::Ref<const Eigen::VectorXd>& s,
              const Eigen::Ref<const Eigen::VectorXd>& a) const;
  QFunction snapshot() const { return engine_.snapshot(); }
  const KompEngine& engine() const { return engine_; }

  double z() const { return z_; }
  long step_count() const { return t_; }
  const LearnerConfig& config() const { return cfg_; }

  void set_compress_hook(CompressHook hook) { hook_ = std::move(hook); }

  // Adopt q as the current function at step t with averaged difference z.
  void restore(const QFunction& q, double z, long t);

  // Bit-exact checkpoint restore: also reinstates the engine's solver state.
  void restore(const QFunction& q, double z, long t, const KompEngine::SolverState& st);
  [[nodiscard]] KompEngine::SolverState solver_state() const { return engine_.solver_state(); }

 private:
  Outcome apply(const SarsaTuple& tup, bool kq_form);

  LearnerConfig cfg_;
  KompEngine engine_;
  double z_ = 0.0;
  long t_ = 0;
  CompressHook hook_;
};

}  // namespace kql
