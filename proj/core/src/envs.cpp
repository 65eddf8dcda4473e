#include "kql/envs.hpp"

#include <cmath>
#include <stdexcept>

namespace kql {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clipd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

EnvSpec pendulum_spec() {
  EnvSpec s;
  s.name = "pendulum";
  s.state_dim = 3;
  s.action_dim = 1;
  s.state_lo = Eigen::Vector3d(-1.0, -1.0, -8.0);
  s.state_hi = Eigen::Vector3d(1.0, 1.0, 8.0);
  s.action_lo = Eigen::VectorXd::Constant(1, -2.0);
  s.action_hi = Eigen::VectorXd::Constant(1, 2.0);
  s.max_episode_steps = 200;
  return s;
}

EnvSpec mountain_car_spec() {
  EnvSpec s;
  s.name = "mountain_car";
  s.state_dim = 2;
  s.action_dim = 1;
  s.state_lo = Eigen::Vector2d(-1.2, -0.07);
  s.state_hi = Eigen::Vector2d(0.6, 0.07);
  s.action_lo = Eigen::VectorXd::Constant(1, -1.0);
  s.action_hi = Eigen::VectorXd::Constant(1, 1.0);
  s.max_episode_steps = 999;
  return s;
}

}  // namespace

Transition pendulum_step(const Eigen::Ref<const Eigen::VectorXd>& state, double torque) {
  if (state.size() != 3) throw std::invalid_argument("pendulum_step: state must be 3-d");
  const double u = clipd(torque, -2.0, 2.0);
  const double th = std::atan2(state(1), state(0));  // already wrapped to (-pi, pi]
  const double thdot = state(2);

  Transition tr;
  tr.reward = -(th * th + 0.1 * thdot * thdot + 0.001 * u * u);
  // th_ddot = 3g/(2l) sin th + 3/(m l^2) u, g=10 m=1 l=1, dt=0.05; the new
  // velocity drives the angle update.
  const double thdot_next = clipd(thdot + (15.0 * std::sin(th) + 3.0 * u) * 0.05, -8.0, 8.0);
  const double th_next = th + thdot_next * 0.05;
  tr.s_next = Eigen::Vector3d(std::cos(th_next), std::sin(th_next), thdot_next);
  tr.done = false;
  return tr;
}

Transition mountain_car_step(const Eigen::Ref<const Eigen::VectorXd>& state, double force) {
  if (state.size() != 2) throw std::invalid_argument("mountain_car_step: state must be 2-d");
  const double a = clipd(force, -1.0, 1.0);
  const double x = state(0);
  const double v = state(1);

  double v_next = clipd(v + 0.0015 * a - 0.0025 * std::cos(3.0 * x), -0.07, 0.07);
  double x_next = x + v_next;
  if (x_next <= -1.2) {
    x_next = -1.2;
    v_next = 0.0;
  } else if (x_next > 0.6) {
    x_next = 0.6;
  }

  Transition tr;
  tr.s_next = Eigen::Vector2d(x_next, v_next);
  tr.done = x_next >= 0.45;
  tr.reward = -0.1 * a * a + (tr.done ? 100.0 : 0.0);
  return tr;
}

namespace {

class PendulumModel final : public EnvModel {
 public:
  PendulumModel() : spec_(pendulum_spec()) {}
  const EnvSpec& spec() const override { return spec_; }

  Eigen::VectorXd reset(Rng& rng) const override {
    const double th = kPi - rng.canonical() * 2.0 * kPi;  // (-pi, pi]
    const double thdot = rng.uniform(-1.0, 1.0);
    return Eigen::Vector3d(std::cos(th), std::sin(th), thdot);
  }

  Transition step(const Eigen::Ref<const Eigen::VectorXd>& state,
                  const Eigen::Ref<const Eigen::VectorXd>& action) const override {
    if (action.size() != 1) throw std::invalid_argument("pendulum: action must be 1-d");
    return pendulum_step(state, action(0));
  }

 private:
  EnvSpec spec_;
};

class MountainCarModel final : public EnvModel {
 public:
  MountainCarModel() : spec_(mountain_car_spec()) {}
  const EnvSpec& spec() const override { return spec_; }

  Eigen::VectorXd reset(Rng& rng) const override {
    return Eigen::Vector2d(rng.uniform(-0.6, 0.4), 0.0);
  }

  Transition step(const Eigen::Ref<const Eigen::VectorXd>& state,
                  const Eigen::Ref<const Eigen::VectorXd>& action) const override {
    if (action.size() != 1) throw std::invalid_argument("mountain_car: action must be 1-d");
    return mountain_car_step(state, action(0));
  }

 private:
  EnvSpec spec_;
};

}  // namespace

std::shared_ptr<const EnvModel> make_env_model(const std::string& name) {
  if (name == "pendulum") return std::make_shared<PendulumModel>();
  if (name == "mountain_car") return std::make_shared<MountainCarModel>();
  throw std::invalid_argument("unknown environment: " + name);
}

Environment::Environment(std::shared_ptr<const EnvModel> model) : model_(std::move(model)) {
  if (!model_) throw std::invalid_argument("Environment: null model");
  obs_ = Eigen::VectorXd::Zero(model_->spec().state_dim);
}

Eigen::VectorXd Environment::reset(Rng& rng) {
  obs_ = model_->reset(rng);
  steps_ = 0;
  return obs_;
}

Transition Environment::step(const Eigen::Ref<const Eigen::VectorXd>& action) {
  Transition tr = model_->step(obs_, action);
  obs_ = tr.s_next;
  ++steps_;
  if (steps_ >= model_->spec().max_episode_steps) tr.truncated = true;
  return tr;
}

void Environment::set_observation(const Eigen::Ref<const Eigen::VectorXd>& obs,
                                  long episode_steps) {
  if (obs.size() != model_->spec().state_dim)
    throw std::invalid_argument("Environment::set_observation: dimension mismatch");
  obs_ = obs;
  steps_ = episode_steps;
}

}  // namespace kql
