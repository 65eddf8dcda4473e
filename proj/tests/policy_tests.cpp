// Exploration schedule and the exploratory/greedy action split.

#include <cmath>
#include <cstdlib>

#include "doctest.h"
#include "kql/policy.hpp"

using namespace kql;

namespace {

Box box1(double lo, double hi) {
  Box b;
  b.lo = Eigen::VectorXd::Constant(1, lo);
  b.hi = Eigen::VectorXd::Constant(1, hi);
  return b;
}

QFunction bump_q() {
  KernelConfig kc;
  kc.bandwidths = Eigen::Vector3d(1.0, 1.0, 0.5);
  QFunction q = QFunction::zero(kc, 2, 1);
  q.dict.resize(3, 1);
  q.dict << 0.2, -0.1, 0.3;
  q.weights = Eigen::VectorXd::Constant(1, 0.9);
  return q;
}

SearchConfig quick_search() {
  SearchConfig sc;
  sc.n_seeds = 8;
  sc.ascent_steps = 40;
  return sc;
}

}  // namespace

TEST_CASE("exploration probability decays linearly then holds") {
  RhoSchedule sched;  // 1.0 -> 0.1 over 1e5 steps
  CHECK(rho_at(sched, 0) == 1.0);
  CHECK(rho_at(sched, 50000) == 0.55);
  CHECK(rho_at(sched, 100000) == 0.1);
  CHECK(rho_at(sched, 100001) == 0.1);
  CHECK(rho_at(sched, 10000000) == 0.1);
  double prev = rho_at(sched, 0);
  for (long t = 1; t <= 120000; t += 997) {
    const double cur = rho_at(sched, t);
    CHECK(cur <= prev);
    prev = cur;
  }
  CHECK_THROWS_AS((void)rho_at(sched, -1), std::invalid_argument);
}

TEST_CASE("schedule validation bounds the endpoints") {
  RhoSchedule ok;
  CHECK_NOTHROW(ok.validate());
  RhoSchedule s = ok;
  s.rho_start = 1.2;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = ok;
  s.rho_end = 0.5;
  s.rho_start = 0.3;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = ok;
  s.rho_end = -0.1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = ok;
  s.decay_steps = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = ok;
  s.rho_start = std::nan("");
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = ok;
  s.rho_end = 0.0;
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("rho = 1 always explores with uniform in-box actions") {
  const QFunction q = bump_q();
  const Box box = box1(-2.0, 2.0);
  RhoSchedule sched;
  Eigen::VectorXd s(2);
  s << 0.2, -0.1;
  Rng rng(404);
  Rng shadow(404);
  for (int i = 0; i < 50; ++i) {
    PolicyChoice c = select_action(q, s, sched, 0, box, quick_search(), rng);
    CHECK(c.exploratory);
    (void)shadow.canonical();  // the Bernoulli draw
    CHECK(c.action(0) == shadow.uniform(-2.0, 2.0));
  }
}

TEST_CASE("rho = 0 always exploits and matches maximize_action") {
  const QFunction q = bump_q();
  const Box box = box1(-2.0, 2.0);
  RhoSchedule sched;
  sched.rho_start = 1.0;
  sched.rho_end = 0.0;
  sched.decay_steps = 10;
  Eigen::VectorXd s(2);
  s << 0.2, -0.1;
  Rng rng(11);
  Rng shadow(11);
  PolicyChoice c = select_action(q, s, sched, 999, box, quick_search(), rng);
  CHECK(!c.exploratory);
  (void)shadow.canonical();
  MaximizeResult best = maximize_action(q, s, box, quick_search(), shadow);
  CHECK(c.action == best.action);
  CHECK(std::abs(c.action(0) - 0.3) < 1e-4);
}

TEST_CASE("intermediate rho explores at the scheduled rate") {
  const QFunction q = bump_q();
  const Box box = box1(-1.0, 1.0);
  RhoSchedule sched;
  sched.rho_start = 1.0;
  sched.rho_end = 0.0;
  sched.decay_steps = 10;
  Eigen::VectorXd s(2);
  s << 0.0, 0.0;
  SearchConfig sc;
  sc.n_seeds = 2;
  sc.ascent_steps = 2;
  Rng rng(2024);
  const int n = 4000;
  int exploratory = 0;
  for (int i = 0; i < n; ++i)
    exploratory += select_action(q, s, sched, 5, box, sc, rng).exploratory ? 1 : 0;
  // Binomial(4000, 0.5): sd ~ 31.6, so 150 is a > 4.7 sigma band.
  CHECK(std::abs(exploratory - 2000) < 150);
}
