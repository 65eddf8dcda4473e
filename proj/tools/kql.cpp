// Command line front end: train / sweep / eval / plot.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "kql/charts.hpp"
#include "kql/metrics_io.hpp"
#include "kql/trainer.hpp"

namespace fs = std::filesystem;
using namespace kql;

namespace {

std::string default_out_dir() {
  if (const char* v = std::getenv("KQLEARN_OUT_DIR"); v && *v) return v;
  return "kql_out";
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

// Flags shared by train and sweep. Optional values override the config file
// (or the per-environment preset when no file is given).
struct CommonFlags {
  std::string config_file;
  std::string env;
  std::string out_dir;
  std::optional<long> steps;
  std::optional<std::string> algorithm, policy, replay_mode, schedule;
  std::optional<double> alpha, beta, p_alpha, p_beta, comp_c, discount, reg_lambda, jitter;
  std::optional<std::vector<double>> bandwidths;
  std::optional<long> eval_every, eval_trajectories, interval, checkpoint_every, replay_capacity;
  std::optional<long> rho_decay_steps;
  std::optional<double> rho_start, rho_end;
  std::optional<std::vector<unsigned long long>> seeds;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file, "JSON config file (flags override it)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--env", f.env, "environment preset: pendulum | mountain_car");
  cmd->add_option("--out", f.out_dir, "output directory (default $KQLEARN_OUT_DIR or ./kql_out)");
  cmd->add_option("--steps", f.steps, "total environment steps");
  cmd->add_option("--algorithm", f.algorithm, "kq | semigradient | hybrid");
  cmd->add_option("--policy", f.policy, "exploratory | rho_greedy");
  cmd->add_option("--replay-mode", f.replay_mode, "off | uniform | prioritized");
  cmd->add_option("--replay-capacity", f.replay_capacity, "replay buffer capacity");
  cmd->add_option("--schedule", f.schedule, "constant | diminishing");
  cmd->add_option("--alpha", f.alpha, "step size");
  cmd->add_option("--beta", f.beta, "averaging rate");
  cmd->add_option("--p-alpha", f.p_alpha, "alpha decay exponent (diminishing)");
  cmd->add_option("--p-beta", f.p_beta, "beta decay exponent (diminishing)");
  cmd->add_option("--comp-c", f.comp_c, "compression constant C in eps = C alpha^2");
  cmd->add_option("--discount", f.discount, "discount factor");
  cmd->add_option("--reg-lambda", f.reg_lambda, "Hilbert-norm regularization weight");
  cmd->add_option("--jitter", f.jitter, "Gram solve regularization");
  cmd->add_option("--bandwidths", f.bandwidths, "kernel bandwidths, state dims then action dims")
      ->expected(-1);
  cmd->add_option("--eval-every", f.eval_every, "steps between held-out evaluations (0 = off)");
  cmd->add_option("--eval-trajectories", f.eval_trajectories, "trajectories per evaluation");
  cmd->add_option("--interval", f.interval, "reward-averaging interval in steps");
  cmd->add_option("--checkpoint-every", f.checkpoint_every, "steps between checkpoints (0 = off)");
  cmd->add_option("--rho-start", f.rho_start, "initial exploration probability");
  cmd->add_option("--rho-end", f.rho_end, "final exploration probability");
  cmd->add_option("--rho-decay-steps", f.rho_decay_steps, "steps to reach rho-end");
  cmd->add_option("--seeds", f.seeds, "seed list")->expected(-1);
}

RunConfig build_config(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config_file.empty()) {
    std::ifstream is(f.config_file);
    std::stringstream ss;
    ss << is.rdbuf();
    cfg = run_config_from_json(ss.str());
    if (!f.env.empty() && f.env != cfg.env)
      throw CLI::ValidationError("--env conflicts with the config file's env");
  } else {
    cfg = default_run_config(f.env.empty() ? "mountain_car" : f.env);
  }
  if (f.steps) cfg.total_steps = *f.steps;
  if (f.algorithm) cfg.algorithm = learner_variant_from_string(*f.algorithm);
  if (f.policy) cfg.policy = policy_mode_from_string(*f.policy);
  if (f.replay_mode) cfg.replay.mode = replay_mode_from_string(*f.replay_mode);
  if (f.replay_capacity) cfg.replay.capacity = *f.replay_capacity;
  if (f.schedule) cfg.learner.schedule = step_schedule_from_string(*f.schedule);
  if (f.alpha) cfg.learner.alpha = *f.alpha;
  if (f.beta) cfg.learner.beta = *f.beta;
  if (f.p_alpha) cfg.learner.p_alpha = *f.p_alpha;
  if (f.p_beta) cfg.learner.p_beta = *f.p_beta;
  if (f.comp_c) cfg.learner.comp_c = *f.comp_c;
  if (f.discount) cfg.learner.discount = *f.discount;
  if (f.reg_lambda) cfg.learner.reg_lambda = *f.reg_lambda;
  if (f.jitter) cfg.kernel.jitter = *f.jitter;
  if (f.bandwidths)
    cfg.kernel.bandwidths = Eigen::Map<const Eigen::VectorXd>(
        f.bandwidths->data(), static_cast<long>(f.bandwidths->size()));
  if (f.eval_every) cfg.eval_every = *f.eval_every;
  if (f.eval_trajectories) cfg.eval_trajectories = *f.eval_trajectories;
  if (f.interval) cfg.interval_steps = *f.interval;
  if (f.checkpoint_every) cfg.checkpoint_every = *f.checkpoint_every;
  if (f.rho_start) cfg.rho.rho_start = *f.rho_start;
  if (f.rho_end) cfg.rho.rho_end = *f.rho_end;
  if (f.rho_decay_steps) cfg.rho.decay_steps = *f.rho_decay_steps;
  if (f.seeds) cfg.seeds = *f.seeds;
  cfg.validate();
  for (const std::string& w : cfg.learner.warnings()) std::cerr << "warning: " << w << '\n';
  return cfg;
}

std::vector<double> downsampled(const std::vector<double>& v, size_t cap, size_t& stride) {
  stride = v.size() > cap ? (v.size() + cap - 1) / cap : 1;
  if (stride == 1) return v;
  std::vector<double> out;
  for (size_t i = 0; i < v.size(); i += stride) out.push_back(v[i]);
  return out;
}

void emit_run_charts(const fs::path& dir, const std::vector<StepRecord>& steps,
                     const std::vector<IntervalRecord>& intervals) {
  {
    ChartSeries s;
    for (const IntervalRecord& r : intervals) {
      s.x.push_back(static_cast<double>(r.t_end));
      s.y.push_back(r.avg_reward);
    }
    auto os = open_out(dir / "reward.svg");
    write_line_chart_svg(os, "Average training reward", "steps", "reward per episode", {s});
  }
  {
    ChartSeries s;
    s.color = "#b03535";
    for (const IntervalRecord& r : intervals) {
      s.x.push_back(static_cast<double>(r.t_end));
      s.y.push_back(r.norm_bellman);
    }
    auto os = open_out(dir / "bellman.svg");
    write_line_chart_svg(os, "Normalized Bellman error", "steps", "error", {s});
  }
  {
    ChartSeries s;
    s.color = "#2d8a43";
    std::vector<double> xs, ys;
    for (const StepRecord& r : steps) {
      xs.push_back(static_cast<double>(r.t));
      ys.push_back(static_cast<double>(r.order));
    }
    size_t stride = 1;
    s.y = downsampled(ys, 2000, stride);
    for (size_t i = 0; i < xs.size(); i += stride) s.x.push_back(xs[i]);
    auto os = open_out(dir / "order.svg");
    write_line_chart_svg(os, "Model order", "steps", "dictionary atoms", {s});
  }
}

void emit_aggregate_charts(const fs::path& dir, const SweepSummary& sum) {
  auto series = [](const AggregateSeries& a, const char* color) {
    ChartSeries s;
    s.color = color;
    for (size_t i = 0; i < a.t.size(); ++i) {
      s.x.push_back(static_cast<double>(a.t[i]));
      s.y.push_back(a.mean[i]);
      s.band.push_back(a.stddev[i]);
    }
    return s;
  };
  {
    auto os = open_out(dir / "reward.svg");
    write_line_chart_svg(os, "Average training reward (mean over seeds)", "steps",
                         "reward per episode", {series(sum.reward, "#1a6fb5")});
  }
  {
    auto os = open_out(dir / "bellman.svg");
    write_line_chart_svg(os, "Normalized Bellman error (mean over seeds)", "steps", "error",
                         {series(sum.norm_bellman, "#b03535")});
  }
  {
    ChartSeries s = series(sum.order, "#2d8a43");
    ChartSeries ds;
    ds.color = s.color;
    size_t stride = 1;
    ds.y = downsampled(s.y, 2000, stride);
    for (size_t i = 0; i < s.x.size(); i += stride) {
      ds.x.push_back(s.x[i]);
      ds.band.push_back(s.band[i]);
    }
    auto os = open_out(dir / "order.svg");
    write_line_chart_svg(os, "Model order (mean over seeds)", "steps", "dictionary atoms", {ds});
  }
}

void emit_grids_if_supported(const fs::path& dir, const RunConfig& cfg, const QFunction& q) {
  const EnvSpec& spec = make_env_model(cfg.env)->spec();
  if (spec.state_dim != 2 || spec.action_dim != 1) return;
  auto vos = open_out(dir / "value_grid.txt");
  auto pos = open_out(dir / "policy_grid.txt");
  write_value_policy_grids(vos, pos, q, spec.state_lo, spec.state_hi, spec.action_lo(0),
                           spec.action_hi(0), 100, 101);
  auto dos_ = open_out(dir / "dict_points.txt");
  write_dict_points(dos_, q);
}

void write_single_run(const fs::path& dir, const RunConfig& cfg, const TrainResult& res) {
  fs::create_directories(dir);
  {
    auto os = open_out(dir / "steps.csv");
    write_steps_csv(os, res.metrics.steps);
  }
  {
    auto os = open_out(dir / "intervals.csv");
    write_intervals_csv(os, res.metrics.intervals);
  }
  {
    auto os = open_out(dir / "q.txt");
    write_qfunction(res.q, os);
  }
  {
    const SweepSummary sum = aggregate_seeds({res.metrics});
    auto os = open_out(dir / "summary.json");
    write_summary_json(os, cfg, {res}, sum);
  }
  if (!res.metrics.steps.empty()) emit_run_charts(dir, res.metrics.steps, res.metrics.intervals);
  emit_grids_if_supported(dir, cfg, res.q);
}

int cmd_train(const CommonFlags& f, bool resume) {
  const RunConfig cfg = build_config(f);
  const fs::path dir = f.out_dir.empty() ? default_out_dir() : f.out_dir;
  fs::create_directories(dir);
  const std::string ckpt = (dir / "checkpoint.json").string();
  const unsigned long long seed = cfg.seeds.front();

  TrainResult res;
  if (resume) {
    res = resume_train(cfg, ckpt);
  } else {
    const bool want_ckpt = cfg.checkpoint_every > 0;
    res = train(cfg, seed, {}, want_ckpt ? ckpt : std::string());
  }
  write_single_run(dir, cfg, res);

  std::cout << "seed " << res.seed << ": " << res.metrics.steps.size() << " steps, "
            << res.metrics.episodes << " episodes, final order " << res.q.order() << ", total reward "
            << res.metrics.total_reward << " (" << res.wall_seconds << " s)\n"
            << "wrote " << (dir / "summary.json").string() << '\n';
  return 0;
}

int cmd_sweep(const CommonFlags& f, int jobs) {
  const RunConfig cfg = build_config(f);
  const fs::path dir = f.out_dir.empty() ? default_out_dir() : f.out_dir;
  fs::create_directories(dir);

  const int n = static_cast<int>(cfg.seeds.size());
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min(jobs, n));

  std::vector<TrainResult> results(n);
  std::vector<std::string> errors(n);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        results[i] = train(cfg, cfg.seeds[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (std::thread& th : pool) th.join();
  for (int i = 0; i < n; ++i)
    if (!errors[i].empty())
      throw std::runtime_error("seed " + std::to_string(cfg.seeds[i]) + " failed: " + errors[i]);

  std::vector<RunMetrics> metrics;
  for (int i = 0; i < n; ++i) {
    const fs::path sdir = dir / ("seed_" + std::to_string(cfg.seeds[i]));
    write_single_run(sdir, cfg, results[i]);
    metrics.push_back(results[i].metrics);
    std::cout << "seed " << cfg.seeds[i] << ": final order " << results[i].q.order()
              << ", total reward " << results[i].metrics.total_reward << '\n';
  }

  const SweepSummary sum = aggregate_seeds(metrics);
  {
    auto os = open_out(dir / "summary.json");
    write_summary_json(os, cfg, results, sum);
  }
  if (!metrics.front().steps.empty()) emit_aggregate_charts(dir, sum);
  std::cout << "final window: order " << sum.final_order << ", loss " << sum.final_loss
            << ", reward " << sum.final_reward << '\n'
            << "wrote " << (dir / "summary.json").string() << '\n';
  return 0;
}

int cmd_eval(const std::string& q_file, const std::string& env_name, int n_traj,
             unsigned long long seed, double discount) {
  std::ifstream is(q_file);
  if (!is) throw std::runtime_error("cannot open " + q_file);
  const QFunction q = read_qfunction(is);
  Rng rng(Rng::derive(seed, 1));
  SearchConfig search;
  const EvalResult ev = eval_bellman_error(q, env_name, n_traj, search, discount, rng);
  std::cout << "raw " << ev.raw << "\nnormalized " << ev.normalized
            << (ev.denom_floored ? " (norm floored)" : "") << '\n';
  return 0;
}

int cmd_plot(const std::string& run_dir) {
  const fs::path dir = run_dir;
  std::ifstream ss(dir / "steps.csv");
  if (!ss) throw std::runtime_error("no steps.csv in " + run_dir);
  const auto steps = read_steps_csv(ss);
  std::ifstream is(dir / "intervals.csv");
  if (!is) throw std::runtime_error("no intervals.csv in " + run_dir);
  const auto intervals = read_intervals_csv(is);
  emit_run_charts(dir, steps, intervals);
  std::cout << "wrote charts in " << dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel Q-learning trainer"};
  app.require_subcommand(1);

  CommonFlags train_flags, sweep_flags;
  bool resume = false;
  CLI::App* train_cmd = app.add_subcommand("train", "run one seed and write metrics");
  add_common_flags(train_cmd, train_flags);
  train_cmd->add_flag("--resume", resume, "continue from the checkpoint in the out dir");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "run all config seeds and aggregate");
  int jobs = 0;
  add_common_flags(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--jobs", jobs, "parallel worker count (default: hardware)");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Bellman error of a saved value function");
  std::string q_file, eval_env = "mountain_car";
  int eval_traj = 5;
  unsigned long long eval_seed = 1;
  double eval_discount = 0.99;
  eval_cmd->add_option("--q", q_file, "saved value function file")->required();
  eval_cmd->add_option("--env", eval_env, "environment name");
  eval_cmd->add_option("--trajectories", eval_traj, "rollouts to average");
  eval_cmd->add_option("--seed", eval_seed, "evaluation seed");
  eval_cmd->add_option("--discount", eval_discount, "discount factor");

  CLI::App* plot_cmd = app.add_subcommand("plot", "regenerate charts from a run directory");
  std::string run_dir;
  plot_cmd->add_option("--run", run_dir, "run directory with steps.csv/intervals.csv")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(train_flags, resume);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_flags, jobs);
    if (eval_cmd->parsed()) return cmd_eval(q_file, eval_env, eval_traj, eval_seed, eval_discount);
    if (plot_cmd->parsed()) return cmd_plot(run_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
