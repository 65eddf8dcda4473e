#include <benchmark/benchmark.h>

#include "kql/action_search.hpp"
#include "kql/komp.hpp"
#include "kql/learner.hpp"

namespace {

using namespace kql;

KernelConfig bench_kernel(int dim) {
  KernelConfig k;
  k.bandwidths = Eigen::VectorXd::Constant(dim, 0.7);
  return k;
}

QFunction random_q(int dim, int m, Rng& rng) {
  QFunction q;
  q.kernel = bench_kernel(dim);
  q.state_dim = dim - 1;
  q.action_dim = 1;
  q.dict.resize(dim, m);
  q.weights.resize(m);
  for (int i = 0; i < m; ++i) {
    for (int d = 0; d < dim; ++d) q.dict(d, i) = rng.uniform(-1.0, 1.0);
    q.weights(i) = rng.uniform(-1.0, 1.0);
  }
  return q;
}

void bm_kernel_eval(benchmark::State& state) {
  Rng rng(7);
  const KernelConfig k = bench_kernel(4);
  Eigen::VectorXd x(4), y(4);
  for (int d = 0; d < 4; ++d) {
    x(d) = rng.uniform(-1, 1);
    y(d) = rng.uniform(-1, 1);
  }
  for (auto _ : state) benchmark::DoNotOptimize(kernel_eval(k, x, y));
}
BENCHMARK(bm_kernel_eval);

void bm_gram(benchmark::State& state) {
  Rng rng(7);
  const QFunction q = random_q(4, static_cast<int>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(gram_matrix(q.kernel, q.dict));
}
BENCHMARK(bm_gram)->Arg(64)->Arg(256);

void bm_q_eval(benchmark::State& state) {
  Rng rng(7);
  const QFunction q = random_q(4, static_cast<int>(state.range(0)), rng);
  Eigen::VectorXd x(4);
  for (int d = 0; d < 4; ++d) x(d) = rng.uniform(-1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(q_eval(q, x));
}
BENCHMARK(bm_q_eval)->Arg(64)->Arg(512);

void bm_maximize_action(benchmark::State& state) {
  Rng rng(7);
  const QFunction q = random_q(4, static_cast<int>(state.range(0)), rng);
  const Box box{Eigen::VectorXd::Constant(1, -2.0), Eigen::VectorXd::Constant(1, 2.0)};
  SearchConfig cfg;
  Eigen::VectorXd s(3);
  for (int d = 0; d < 3; ++d) s(d) = rng.uniform(-1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(maximize_action(q, s, box, cfg, rng));
}
BENCHMARK(bm_maximize_action)->Arg(64)->Arg(512);

void bm_engine_compress(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  Rng rng(7);
  for (auto _ : state) {
    state.PauseTiming();
    KompEngine eng(bench_kernel(4), 3, 1);
    eng.reset(random_q(4, m, rng));
    eng.append_atom(Eigen::VectorXd::Constant(4, 0.3), 0.05);
    state.ResumeTiming();
    benchmark::DoNotOptimize(eng.compress(1e-4));
  }
}
BENCHMARK(bm_engine_compress)->Arg(64)->Arg(256);

void bm_learner_step(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  Rng rng(7);
  LearnerConfig lc;
  lc.variant = LearnerVariant::kq;
  lc.alpha = 0.25;
  lc.beta = 1.0;
  lc.comp_c = 1e-6;  // keep the dictionary from collapsing mid-benchmark
  Learner learner(lc, bench_kernel(4), 3, 1);
  learner.restore(random_q(4, m, rng), 0.0, 0);
  SarsaTuple tup;
  tup.s = Eigen::VectorXd::Zero(3);
  tup.a = Eigen::VectorXd::Zero(1);
  tup.s_next = Eigen::VectorXd::Constant(3, 0.1);
  tup.a_next = Eigen::VectorXd::Constant(1, 0.1);
  tup.r = 1.0;
  for (auto _ : state) {
    tup.s(0) = learner.engine().order() * 1e-4;  // fresh atom each step
    benchmark::DoNotOptimize(learner.step(tup));
  }
}
BENCHMARK(bm_learner_step)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
