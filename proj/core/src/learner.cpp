#include "kql/learner.hpp"

#include <cmath>
#include <stdexcept>

namespace kql {

const char* to_string(LearnerVariant v) {
  switch (v) {
    case LearnerVariant::kq: return "kq";
    case LearnerVariant::semigradient: return "semigradient";
    case LearnerVariant::hybrid: return "hybrid";
  }
  return "?";
}

const char* to_string(StepSchedule s) {
  return s == StepSchedule::constant ? "constant" : "diminishing";
}

LearnerVariant learner_variant_from_string(const std::string& s) {
  if (s == "kq") return LearnerVariant::kq;
  if (s == "semigradient") return LearnerVariant::semigradient;
  if (s == "hybrid") return LearnerVariant::hybrid;
  throw std::invalid_argument("unknown learner variant: " + s);
}

StepSchedule step_schedule_from_string(const std::string& s) {
  if (s == "constant") return StepSchedule::constant;
  if (s == "diminishing") return StepSchedule::diminishing;
  throw std::invalid_argument("unknown step schedule: " + s);
}

void LearnerConfig::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(alpha)) throw std::invalid_argument("LearnerConfig: alpha must be > 0");
  if (!positive(beta)) throw std::invalid_argument("LearnerConfig: beta must be > 0");
  if (!(std::isfinite(discount) && discount >= 0.0 && discount < 1.0))
    throw std::invalid_argument("LearnerConfig: discount must be in [0, 1)");
  if (!(std::isfinite(reg_lambda) && reg_lambda >= 0.0))
    throw std::invalid_argument("LearnerConfig: reg_lambda must be >= 0");
  if (!(std::isfinite(comp_c) && comp_c >= 0.0))
    throw std::invalid_argument("LearnerConfig: comp_c must be >= 0");
  if (schedule == StepSchedule::constant) {
    if (beta > 1.0) throw std::invalid_argument("LearnerConfig: constant beta must be <= 1");
    if (!(alpha < beta))
      throw std::invalid_argument("LearnerConfig: constant schedule needs alpha < beta");
  } else {
    if (beta > 1.0)
      throw std::invalid_argument("LearnerConfig: beta at t=0 must be <= 1");
    auto in_range = [](double p) { return p > 0.5 && p <= 1.0; };
    if (!in_range(p_alpha) || !in_range(p_beta))
      throw std::invalid_argument("LearnerConfig: decay exponents must lie in (0.5, 1]");
    // alpha must shrink fast enough relative to beta for the averaged
    // difference to track the true one; this is the usual two-timescale
    // summability requirement.
    if (!(2.0 * p_alpha - p_beta > 1.0))
      throw std::invalid_argument("LearnerConfig: need 2*p_alpha - p_beta > 1");
  }
}

std::vector<std::string> LearnerConfig::warnings() const {
  std::vector<std::string> w;
  if (schedule == StepSchedule::constant && beta == 1.0)
    w.push_back("beta = 1: averaged difference degenerates to the raw one-step difference");
  if (reg_lambda == 0.0)
    w.push_back("reg_lambda = 0: weights are never decayed, dictionary norm may drift");
  return w;
}

StepSizes step_sizes(const LearnerConfig& cfg, long t) {
  StepSizes sz;
  if (cfg.schedule == StepSchedule::constant) {
    sz.alpha = cfg.alpha;
    sz.beta = cfg.beta;
  } else {
    sz.alpha = cfg.alpha * std::pow(1.0 + static_cast<double>(t), -cfg.p_alpha);
    sz.beta = cfg.beta * std::pow(1.0 + static_cast<double>(t), -cfg.p_beta);
  }
  sz.epsilon = cfg.comp_c * sz.alpha * sz.alpha;
  return sz;
}

double temporal_action_difference(const QFunction& q, const SarsaTuple& tup, double discount) {
  const double next = tup.terminal ? 0.0 : q_eval(q, tup.s_next, tup.a_next);
  return tup.r + discount * next - q_eval(q, tup.s, tup.a);
}

double update_z(double z, double beta, double delta) {
  return (1.0 - beta) * z + beta * delta;
}

Learner::Learner(LearnerConfig cfg, KernelConfig kernel, int state_dim, int action_dim)
    : cfg_(cfg), engine_(std::move(kernel), state_dim, action_dim) {
  cfg_.validate();
}

double Learner::q_at(const Eigen::Ref<const Eigen::VectorXd>& s,
                     const Eigen::Ref<const Eigen::VectorXd>& a) const {
  Eigen::VectorXd x(s.size() + a.size());
  x << s, a;
  return engine_.eval(x);
}

Learner::Outcome Learner::apply(const SarsaTuple& tup, bool kq_form) {
  const StepSizes sz = step_sizes(cfg_, t_);
  Eigen::VectorXd x(tup.s.size() + tup.a.size());
  x << tup.s, tup.a;
  Eigen::VectorXd xn;
  double next_value = 0.0;
  if (!tup.terminal) {
    xn.resize(tup.s_next.size() + tup.a_next.size());
    xn << tup.s_next, tup.a_next;
    next_value = engine_.eval(xn);
  }

  // The difference is measured against the pre-update function.
  const double delta = tup.r + cfg_.discount * next_value - engine_.eval(x);
  z_ = update_z(z_, sz.beta, delta);

  Outcome out;
  out.delta = delta;
  out.z = z_;
  out.sizes = sz;

  engine_.scale_weights(1.0 - sz.alpha * cfg_.reg_lambda);
  engine_.append_atom(x, sz.alpha * z_);
  out.appended = 1;
  if (kq_form && !tup.terminal) {
    engine_.append_atom(xn, -sz.alpha * cfg_.discount * z_);
    out.appended = 2;
  }

  if (hook_) {
    const QFunction pre = engine_.snapshot();
    out.report = engine_.compress(sz.epsilon);
    hook_(pre, engine_.snapshot(), sz);
  } else {
    out.report = engine_.compress(sz.epsilon);
  }
  ++t_;
  return out;
}

Learner::Outcome Learner::step(const SarsaTuple& tup) {
  switch (cfg_.variant) {
    case LearnerVariant::kq: return apply(tup, true);
    case LearnerVariant::semigradient: return apply(tup, false);
    case LearnerVariant::hybrid: return apply(tup, tup.exploratory);
  }
  throw std::logic_error("unreachable");
}

void Learner::restore(const QFunction& q, double z, long t) {
  if (!std::isfinite(z)) throw std::invalid_argument("Learner::restore: non-finite z");
  if (t < 0) throw std::invalid_argument("Learner::restore: negative step count");
  engine_.reset(q);
  z_ = z;
  t_ = t;
}

void Learner::restore(const QFunction& q, double z, long t, const KompEngine::SolverState& st) {
  if (!std::isfinite(z)) throw std::invalid_argument("Learner::restore: non-finite z");
  if (t < 0) throw std::invalid_argument("Learner::restore: negative step count");
  engine_.restore(q, st);
  z_ = z;
  t_ = t;
}

}  // namespace kql
