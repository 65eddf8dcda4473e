#pragma once

#include <memory>
#include <string>

#include <Eigen/Dense>

#include "kql/rng.hpp"

namespace kql {

struct EnvSpec {
  std::string name;
  int state_dim = 0;
  int action_dim = 0;
  Eigen::VectorXd state_lo, state_hi;
  Eigen::VectorXd action_lo, action_hi;
  long max_episode_steps = 0;
};

// `done` marks a natural terminal of the MDP (no continuation value exists
// past it); `truncated` marks an artificial episode end at the step cap.
// Models only ever set `done`; the Environment wrapper sets `truncated`.
struct Transition {
  Eigen::VectorXd s_next;
  double reward = 0.0;
  bool done = false;
  bool truncated = false;
};

// Pure one-step dynamics. Actions are clipped to their bounds inside; the
// returned state lies within the spec's state box.

// state = (cos th, sin th, th_dot). Never sets done; episodes end on the
// step cap only.
Transition pendulum_step(const Eigen::Ref<const Eigen::VectorXd>& state, double torque);

// state = (x, v). done when the goal position 0.45 is reached.
Transition mountain_car_step(const Eigen::Ref<const Eigen::VectorXd>& state, double force);

class EnvModel {
 public:
  virtual ~EnvModel() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual Eigen::VectorXd reset(Rng& rng) const = 0;
  virtual Transition step(const Eigen::Ref<const Eigen::VectorXd>& state,
                          const Eigen::Ref<const Eigen::VectorXd>& action) const = 0;
};

// Known names: "pendulum", "mountain_car".
std::shared_ptr<const EnvModel> make_env_model(const std::string& name);

// Stateful wrapper around a (stateless, shareable) model: tracks the current
// observation and the per-episode step count, and raises `truncated` when the
// cap is hit. Copyable; copies evolve independently.
class Environment {
 public:
  explicit Environment(std::shared_ptr<const EnvModel> model);
  static Environment make(const std::string& name) { return Environment(make_env_model(name)); }

  const EnvSpec& spec() const { return model_->spec(); }
  const Eigen::VectorXd& observation() const { return obs_; }
  long episode_steps() const { return steps_; }

  Eigen::VectorXd reset(Rng& rng);
  Transition step(const Eigen::Ref<const Eigen::VectorXd>& action);

  // Place the environment at an arbitrary observation (checkpoint restore,
  // targeted tests). No validation beyond dimension.
  void set_observation(const Eigen::Ref<const Eigen::VectorXd>& obs, long episode_steps);

 private:
  std::shared_ptr<const EnvModel> model_;
  Eigen::VectorXd obs_;
  long steps_ = 0;
};

}  // namespace kql
