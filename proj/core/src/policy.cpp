#include "kql/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace kql {

void RhoSchedule::validate() const {
  if (!(std::isfinite(rho_start) && std::isfinite(rho_end)))
    throw std::invalid_argument("RhoSchedule: non-finite rho");
  if (!(1.0 >= rho_start && rho_start >= rho_end && rho_end >= 0.0))
    throw std::invalid_argument("RhoSchedule: need 1 >= rho_start >= rho_end >= 0");
  if (decay_steps < 1) throw std::invalid_argument("RhoSchedule: decay_steps must be >= 1");
}

double rho_at(const RhoSchedule& sched, long t) {
  if (t < 0) throw std::invalid_argument("rho_at: negative t");
  if (t >= sched.decay_steps) return sched.rho_end;
  const double frac = static_cast<double>(t) / static_cast<double>(sched.decay_steps);
  return sched.rho_start + frac * (sched.rho_end - sched.rho_start);
}

PolicyChoice select_action(const QFunction& q, const Eigen::Ref<const Eigen::VectorXd>& s,
                           const RhoSchedule& sched, long t, const Box& box,
                           const SearchConfig& search, Rng& rng) {
  sched.validate();
  const double rho = rho_at(sched, t);
  if (rng.bernoulli(rho)) {
    Eigen::VectorXd a(box.lo.size());
    for (int d = 0; d < a.size(); ++d) a(d) = rng.uniform(box.lo(d), box.hi(d));
    return {std::move(a), true};
  }
  return {maximize_action(q, s, box, search, rng).action, false};
}

}  // namespace kql
