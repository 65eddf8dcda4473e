#include "kql/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace kql {

using nlohmann::json;

const char* to_string(PolicyMode m) {
  return m == PolicyMode::exploratory ? "exploratory" : "rho_greedy";
}

PolicyMode policy_mode_from_string(const std::string& s) {
  if (s == "exploratory") return PolicyMode::exploratory;
  if (s == "rho_greedy") return PolicyMode::rho_greedy;
  throw std::invalid_argument("unknown policy mode: " + s);
}

void RunConfig::validate() const {
  const EnvSpec& spec = make_env_model(env)->spec();
  kernel.validate();
  learner.validate();
  search.validate();
  replay.validate();
  rho.validate();
  if (kernel.dim() != spec.state_dim + spec.action_dim)
    throw std::invalid_argument("RunConfig: kernel bandwidth count must equal state_dim + action_dim");
  if (total_steps < 0) throw std::invalid_argument("RunConfig: total_steps must be >= 0");
  if (interval_steps < 1) throw std::invalid_argument("RunConfig: interval_steps must be >= 1");
  if (eval_every < 0 || checkpoint_every < 0)
    throw std::invalid_argument("RunConfig: cadences must be >= 0");
  if (eval_every > 0 && eval_trajectories < 1)
    throw std::invalid_argument("RunConfig: eval_trajectories must be >= 1 when eval is on");
  if (seeds.empty()) throw std::invalid_argument("RunConfig: need at least one seed");
  if (policy == PolicyMode::exploratory && algorithm != LearnerVariant::kq)
    throw std::invalid_argument(
        "RunConfig: a pure exploratory policy pairs only with the kq update");
}

RunConfig default_run_config(const std::string& env) {
  RunConfig cfg;
  cfg.env = env;
  if (env == "pendulum") {
    cfg.kernel.bandwidths = Eigen::Vector4d(0.5, 0.5, 2.0, 0.5);
    cfg.learner.comp_c = 2.0;
    cfg.total_steps = 100000;
  } else if (env == "mountain_car") {
    cfg.kernel.bandwidths = Eigen::Vector3d(0.8, 0.07, 1.0);
    cfg.learner.comp_c = 0.10;
    cfg.total_steps = 150000;
  } else {
    throw std::invalid_argument("no default config for environment: " + env);
  }
  cfg.learner.alpha = 0.25;
  cfg.learner.beta = 1.0;
  return cfg;
}

namespace {

json config_to_json_obj(const RunConfig& c) {
  json j;
  j["env"] = c.env;
  j["algorithm"] = to_string(c.algorithm);
  j["policy"] = to_string(c.policy);
  j["total_steps"] = c.total_steps;
  j["seeds"] = c.seeds;
  j["eval_every"] = c.eval_every;
  j["eval_trajectories"] = c.eval_trajectories;
  j["interval_steps"] = c.interval_steps;
  j["checkpoint_every"] = c.checkpoint_every;
  j["kernel"] = {{"bandwidths", std::vector<double>(c.kernel.bandwidths.begin(),
                                                    c.kernel.bandwidths.end())},
                 {"jitter", c.kernel.jitter}};
  j["learner"] = {{"schedule", to_string(c.learner.schedule)},
                  {"alpha", c.learner.alpha},
                  {"beta", c.learner.beta},
                  {"p_alpha", c.learner.p_alpha},
                  {"p_beta", c.learner.p_beta},
                  {"discount", c.learner.discount},
                  {"reg_lambda", c.learner.reg_lambda},
                  {"comp_c", c.learner.comp_c}};
  j["search"] = {{"n_seeds", c.search.n_seeds},
                 {"ascent_starts", c.search.ascent_starts},
                 {"ascent_steps", c.search.ascent_steps},
                 {"ascent_rate", c.search.ascent_rate}};
  j["replay"] = {{"mode", to_string(c.replay.mode)},
                 {"capacity", c.replay.capacity},
                 {"priority_floor", c.replay.priority_floor}};
  j["rho"] = {{"start", c.rho.rho_start},
              {"end", c.rho.rho_end},
              {"decay_steps", c.rho.decay_steps}};
  return j;
}

RunConfig config_from_json_obj(const json& j) {
  RunConfig c;
  c.env = j.value("env", c.env);
  if (j.contains("algorithm")) c.algorithm = learner_variant_from_string(j.at("algorithm"));
  if (j.contains("policy")) c.policy = policy_mode_from_string(j.at("policy"));
  c.total_steps = j.value("total_steps", c.total_steps);
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<unsigned long long>>();
  c.eval_every = j.value("eval_every", c.eval_every);
  c.eval_trajectories = j.value("eval_trajectories", c.eval_trajectories);
  c.interval_steps = j.value("interval_steps", c.interval_steps);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  if (j.contains("kernel")) {
    const json& k = j.at("kernel");
    if (k.contains("bandwidths")) {
      const auto bw = k.at("bandwidths").get<std::vector<double>>();
      c.kernel.bandwidths =
          Eigen::Map<const Eigen::VectorXd>(bw.data(), static_cast<long>(bw.size()));
    }
    c.kernel.jitter = k.value("jitter", c.kernel.jitter);
  }
  if (j.contains("learner")) {
    const json& l = j.at("learner");
    if (l.contains("schedule")) c.learner.schedule = step_schedule_from_string(l.at("schedule"));
    c.learner.alpha = l.value("alpha", c.learner.alpha);
    c.learner.beta = l.value("beta", c.learner.beta);
    c.learner.p_alpha = l.value("p_alpha", c.learner.p_alpha);
    c.learner.p_beta = l.value("p_beta", c.learner.p_beta);
    c.learner.discount = l.value("discount", c.learner.discount);
    c.learner.reg_lambda = l.value("reg_lambda", c.learner.reg_lambda);
    c.learner.comp_c = l.value("comp_c", c.learner.comp_c);
  }
  if (j.contains("search")) {
    const json& s = j.at("search");
    c.search.n_seeds = s.value("n_seeds", c.search.n_seeds);
    c.search.ascent_starts = s.value("ascent_starts", c.search.ascent_starts);
    c.search.ascent_steps = s.value("ascent_steps", c.search.ascent_steps);
    c.search.ascent_rate = s.value("ascent_rate", c.search.ascent_rate);
  }
  if (j.contains("replay")) {
    const json& r = j.at("replay");
    if (r.contains("mode")) c.replay.mode = replay_mode_from_string(r.at("mode"));
    c.replay.capacity = r.value("capacity", c.replay.capacity);
    c.replay.priority_floor = r.value("priority_floor", c.replay.priority_floor);
  }
  if (j.contains("rho")) {
    const json& r = j.at("rho");
    c.rho.rho_start = r.value("start", c.rho.rho_start);
    c.rho.rho_end = r.value("end", c.rho.rho_end);
    c.rho.decay_steps = r.value("decay_steps", c.rho.decay_steps);
  }
  return c;
}

}  // namespace

std::string run_config_to_json(const RunConfig& cfg) { return config_to_json_obj(cfg).dump(2); }

RunConfig run_config_from_json(const std::string& text) {
  return config_from_json_obj(json::parse(text));
}

EvalResult eval_bellman_error(const QFunction& q, const std::string& env_name, int n_traj,
                              const SearchConfig& search, double discount, Rng& rng) {
  return eval_bellman_error(q, make_env_model(env_name), n_traj, search, discount, rng);
}

EvalResult eval_bellman_error(const QFunction& q, std::shared_ptr<const EnvModel> model,
                              int n_traj, const SearchConfig& search, double discount,
                              Rng& rng) {
  if (n_traj < 1) throw std::invalid_argument("eval_bellman_error: n_traj must be >= 1");
  Environment env(std::move(model));
  const Box box{env.spec().action_lo, env.spec().action_hi};

  double sum_sq = 0.0;
  long n = 0;
  for (int traj = 0; traj < n_traj; ++traj) {
    Eigen::VectorXd s = env.reset(rng);
    MaximizeResult cur = maximize_action(q, s, box, search, rng);
    for (;;) {
      const Transition tr = env.step(cur.action);
      if (tr.done) {
        // Terminal targets have no continuation value.
        const double f = tr.reward - cur.value;
        sum_sq += f * f;
        ++n;
        break;
      }
      const MaximizeResult next = maximize_action(q, tr.s_next, box, search, rng);
      const double f = tr.reward + discount * next.value - cur.value;
      sum_sq += f * f;
      ++n;
      if (tr.truncated) break;
      cur = next;
    }
  }

  EvalResult out;
  out.raw = sum_sq / (2.0 * static_cast<double>(n));
  const double norm = hilbert_norm(q);
  out.denom_floored = norm < 1e-12;
  out.normalized = out.raw / std::max(norm, 1e-12);
  return out;
}

namespace {

constexpr int kCheckpointSchema = 1;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct LoopState {
  RunConfig cfg;
  unsigned long long seed = 0;
  std::optional<Learner> learner;
  std::optional<ReplayBuffer> buffer;
  std::optional<Environment> env;
  Rng train_rng{0};
  Rng eval_rng{0};
  Eigen::VectorXd s;  // current observation
  long t = 0;         // steps completed
  double episode_return = 0.0;
  std::vector<double> interval_returns;  // returns of episodes completed in the open interval
  double last_avg = 0.0;
  double last_raw = kNaN;
  double last_norm = kNaN;
  bool last_floored = false;
  RunMetrics metrics;
};

json qfunction_to_json(const QFunction& q) {
  json j;
  j["state_dim"] = q.state_dim;
  j["action_dim"] = q.action_dim;
  j["jitter"] = q.kernel.jitter;
  j["bandwidths"] =
      std::vector<double>(q.kernel.bandwidths.begin(), q.kernel.bandwidths.end());
  json atoms = json::array();
  for (int i = 0; i < q.order(); ++i) {
    json row = json::array();
    for (int d = 0; d < q.dim(); ++d) row.push_back(q.dict(d, i));
    row.push_back(q.weights(i));
    atoms.push_back(std::move(row));
  }
  j["atoms"] = std::move(atoms);
  return j;
}

QFunction qfunction_from_json(const json& j) {
  QFunction q;
  q.state_dim = j.at("state_dim").get<int>();
  q.action_dim = j.at("action_dim").get<int>();
  q.kernel.jitter = j.at("jitter").get<double>();
  const auto bw = j.at("bandwidths").get<std::vector<double>>();
  q.kernel.bandwidths =
      Eigen::Map<const Eigen::VectorXd>(bw.data(), static_cast<long>(bw.size()));
  const json& atoms = j.at("atoms");
  const int m = static_cast<int>(atoms.size());
  const int dim = q.state_dim + q.action_dim;
  q.dict.resize(dim, m);
  q.weights.resize(m);
  for (int i = 0; i < m; ++i) {
    const json& row = atoms.at(i);
    if (static_cast<int>(row.size()) != dim + 1)
      throw std::invalid_argument("checkpoint: atom row length mismatch");
    for (int d = 0; d < dim; ++d) q.dict(d, i) = row.at(d).get<double>();
    q.weights(i) = row.at(dim).get<double>();
  }
  q.validate();
  return q;
}

json vec_to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.begin(), v.end()));
}

Eigen::VectorXd vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size()));
}

void save_checkpoint(const LoopState& st, const std::string& path) {
  json j;
  j["schema_version"] = kCheckpointSchema;
  j["kind"] = "kql-checkpoint";
  j["config"] = config_to_json_obj(st.cfg);
  j["seed"] = st.seed;
  j["steps_done"] = st.t;

  const KompEngine::SolverState solver = st.learner->solver_state();
  json js;
  js["z"] = st.learner->z();
  js["t"] = st.learner->step_count();
  js["q"] = qfunction_to_json(st.learner->snapshot());
  std::vector<double> inv(solver.inverse.size());
  Eigen::Map<Eigen::MatrixXd>(inv.data(), solver.inverse.rows(), solver.inverse.cols()) =
      solver.inverse;
  js["solver"] = {{"rows", solver.inverse.rows()},
                  {"inverse", inv},
                  {"calls_since_refresh", solver.calls_since_refresh},
                  {"inverse_ok", solver.inverse_ok},
                  {"maybe_duplicates", solver.maybe_duplicates}};
  j["learner"] = std::move(js);

  j["train_rng"] = st.train_rng.save();
  j["eval_rng"] = st.eval_rng.save();
  j["env"] = {{"obs", vec_to_json(st.env->observation())},
              {"episode_steps", st.env->episode_steps()}};
  j["episode_return"] = st.episode_return;
  j["interval"] = {{"returns", st.interval_returns},
                   {"last_avg", st.last_avg},
                   {"last_raw", st.last_raw},
                   {"last_norm", st.last_norm},
                   {"last_floored", st.last_floored}};

  if (st.buffer) {
    json entries = json::array();
    for (long id = st.buffer->oldest_id(); id < st.buffer->push_count(); ++id) {
      const BufferEntry& e = st.buffer->at_id(id);
      entries.push_back({{"p", e.priority},
                         {"s", vec_to_json(e.tuple.s)},
                         {"a", vec_to_json(e.tuple.a)},
                         {"r", e.tuple.r},
                         {"sn", vec_to_json(e.tuple.s_next)},
                         {"an", vec_to_json(e.tuple.a_next)},
                         {"x", e.tuple.exploratory}});
    }
    j["buffer"] = {{"push_count", st.buffer->push_count()},
                   {"stale_updates", st.buffer->stale_updates()},
                   {"entries", std::move(entries)}};
  }

  j["counters"] = {{"episodes", st.metrics.episodes},
                   {"total_reward", st.metrics.total_reward},
                   {"appended", st.metrics.appended_atoms},
                   {"removed", st.metrics.removed_atoms},
                   {"aborted", st.metrics.aborted_compressions}};

  json steps = json::array();
  for (const StepRecord& r : st.metrics.steps)
    steps.push_back({r.t, r.order, r.epsilon, r.delta, r.z, r.removals, r.reward,
                     r.exploratory ? 1 : 0, r.episode_done ? 1 : 0});
  // Same NaN-as-string encoding as the interval carry fields below: a plain
  // NaN would dump as null and fail the reload.
  json intervals = json::array();
  for (const IntervalRecord& r : st.metrics.intervals)
    intervals.push_back({r.t_end, r.avg_reward,
                         std::isnan(r.raw_bellman) ? json("nan") : json(r.raw_bellman),
                         std::isnan(r.norm_bellman) ? json("nan") : json(r.norm_bellman),
                         r.order, r.denom_floored ? 1 : 0});
  j["metrics"] = {{"steps", std::move(steps)}, {"intervals", std::move(intervals)}};

  // NaN is not representable in JSON; the dump below would emit "null" and
  // fail the round trip, so encode the two optional eval fields as strings.
  j["interval"]["last_raw"] =
      std::isnan(st.last_raw) ? json("nan") : json(st.last_raw);
  j["interval"]["last_norm"] =
      std::isnan(st.last_norm) ? json("nan") : json(st.last_norm);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + tmp);
    os << j.dump() << '\n';
    if (!os) throw std::runtime_error("checkpoint write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot move checkpoint into place: " + path);
}

double json_maybe_nan(const json& v) {
  if (v.is_string() || v.is_null()) return kNaN;
  return v.get<double>();
}

LoopState load_checkpoint(const RunConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  json j = json::parse(is);
  if (j.value("kind", "") != "kql-checkpoint" ||
      j.value("schema_version", -1) != kCheckpointSchema)
    throw std::runtime_error("not a compatible checkpoint: " + path);

  LoopState st;
  st.cfg = cfg;
  st.cfg.validate();
  st.seed = j.at("seed").get<unsigned long long>();
  st.t = j.at("steps_done").get<long>();
  if (st.t > cfg.total_steps)
    throw std::runtime_error("checkpoint is past total_steps; nothing to resume");

  const EnvSpec& spec = make_env_model(cfg.env)->spec();
  st.learner.emplace(cfg.learner_config_with_variant(), cfg.kernel, spec.state_dim,
                     spec.action_dim);
  const json& jl = j.at("learner");
  const json& jsv = jl.at("solver");
  KompEngine::SolverState solver;
  const long rows = jsv.at("rows").get<long>();
  const auto inv = jsv.at("inverse").get<std::vector<double>>();
  if (static_cast<long>(inv.size()) != rows * rows)
    throw std::runtime_error("checkpoint: solver inverse size mismatch");
  solver.inverse = Eigen::Map<const Eigen::MatrixXd>(inv.data(), rows, rows);
  solver.calls_since_refresh = jsv.at("calls_since_refresh").get<int>();
  solver.inverse_ok = jsv.at("inverse_ok").get<bool>();
  solver.maybe_duplicates = jsv.at("maybe_duplicates").get<bool>();
  st.learner->restore(qfunction_from_json(jl.at("q")), jl.at("z").get<double>(),
                      jl.at("t").get<long>(), solver);

  st.train_rng.load(j.at("train_rng").get<std::string>());
  st.eval_rng.load(j.at("eval_rng").get<std::string>());

  st.env.emplace(Environment::make(cfg.env));
  st.env->set_observation(vec_from_json(j.at("env").at("obs")),
                          j.at("env").at("episode_steps").get<long>());
  st.s = st.env->observation();
  st.episode_return = j.at("episode_return").get<double>();

  const json& ji = j.at("interval");
  st.interval_returns = ji.at("returns").get<std::vector<double>>();
  st.last_avg = ji.at("last_avg").get<double>();
  st.last_raw = json_maybe_nan(ji.at("last_raw"));
  st.last_norm = json_maybe_nan(ji.at("last_norm"));
  st.last_floored = ji.at("last_floored").get<bool>();

  if (cfg.replay.mode != ReplayMode::off) {
    st.buffer.emplace(cfg.replay);
    const json& jb = j.at("buffer");
    std::vector<BufferEntry> entries;
    for (const json& e : jb.at("entries")) {
      BufferEntry be;
      be.priority = e.at("p").get<double>();
      be.tuple.s = vec_from_json(e.at("s"));
      be.tuple.a = vec_from_json(e.at("a"));
      be.tuple.r = e.at("r").get<double>();
      be.tuple.s_next = vec_from_json(e.at("sn"));
      be.tuple.a_next = vec_from_json(e.at("an"));
      be.tuple.exploratory = e.at("x").get<bool>();
      entries.push_back(std::move(be));
    }
    st.buffer->adopt(jb.at("push_count").get<long>(), std::move(entries));
  }

  const json& jc = j.at("counters");
  st.metrics.episodes = jc.at("episodes").get<long>();
  st.metrics.total_reward = jc.at("total_reward").get<double>();
  st.metrics.appended_atoms = jc.at("appended").get<long>();
  st.metrics.removed_atoms = jc.at("removed").get<long>();
  st.metrics.aborted_compressions = jc.at("aborted").get<long>();

  for (const json& r : j.at("metrics").at("steps")) {
    StepRecord rec;
    rec.t = r.at(0).get<long>();
    rec.order = r.at(1).get<int>();
    rec.epsilon = r.at(2).get<double>();
    rec.delta = r.at(3).get<double>();
    rec.z = r.at(4).get<double>();
    rec.removals = r.at(5).get<int>();
    rec.reward = r.at(6).get<double>();
    rec.exploratory = r.at(7).get<int>() != 0;
    rec.episode_done = r.at(8).get<int>() != 0;
    st.metrics.steps.push_back(rec);
  }
  for (const json& r : j.at("metrics").at("intervals")) {
    IntervalRecord rec;
    rec.t_end = r.at(0).get<long>();
    rec.avg_reward = r.at(1).get<double>();
    rec.raw_bellman = json_maybe_nan(r.at(2));
    rec.norm_bellman = json_maybe_nan(r.at(3));
    rec.order = r.at(4).get<int>();
    rec.denom_floored = r.at(5).get<int>() != 0;
    st.metrics.intervals.push_back(rec);
  }
  return st;
}

TrainResult run_loop(LoopState& st, const TrainHooks& hooks, const std::string& checkpoint_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig& cfg = st.cfg;
  const EnvSpec& spec = st.env->spec();
  const Box box{spec.action_lo, spec.action_hi};
  const double discount = cfg.learner.discount;

  if (hooks.compress_hook) st.learner->set_compress_hook(hooks.compress_hook);

  auto close_interval = [&](long t_end) {
    IntervalRecord rec;
    rec.t_end = t_end;
    if (st.interval_returns.empty()) {
      rec.avg_reward = st.last_avg;  // carry forward
    } else {
      double sum = 0.0;
      for (double v : st.interval_returns) sum += v;
      rec.avg_reward = sum / static_cast<double>(st.interval_returns.size());
    }
    st.last_avg = rec.avg_reward;
    st.interval_returns.clear();
    rec.raw_bellman = st.last_raw;
    rec.norm_bellman = st.last_norm;
    rec.denom_floored = st.last_floored;
    rec.order = st.learner->engine().order();
    st.metrics.intervals.push_back(rec);
  };

  for (long t = st.t; t < cfg.total_steps; ++t) {
    const QFunction q = st.learner->snapshot();

    // Action selection against the pre-update function.
    PolicyChoice choice;
    if (cfg.policy == PolicyMode::exploratory) {
      Eigen::VectorXd a(spec.action_dim);
      for (int d = 0; d < spec.action_dim; ++d)
        a(d) = st.train_rng.uniform(spec.action_lo(d), spec.action_hi(d));
      choice = {std::move(a), true};
    } else {
      choice = select_action(q, st.s, cfg.rho, t, box, cfg.search, st.train_rng);
    }

    const Transition tr = st.env->step(choice.action);

    // The stream continues from the reset state when an episode ends, and
    // that is the state the next-action value is taken at.
    Eigen::VectorXd s_next = tr.done ? st.env->reset(st.train_rng) : tr.s_next;
    const MaximizeResult next_greedy = maximize_action(q, s_next, box, cfg.search, st.train_rng);

    SarsaTuple tuple;
    tuple.s = st.s;
    tuple.a = choice.action;
    tuple.r = tr.reward;
    tuple.s_next = s_next;
    tuple.a_next = next_greedy.action;
    tuple.exploratory = choice.exploratory;

    st.episode_return += tr.reward;
    st.metrics.total_reward += tr.reward;
    if (tr.done) {
      ++st.metrics.episodes;
      st.interval_returns.push_back(st.episode_return);
      st.episode_return = 0.0;
    }

    SarsaTuple train_tuple;
    long train_id = -1;
    if (st.buffer) {
      const double prio = std::abs(temporal_action_difference(q, tuple, discount));
      st.buffer->push(tuple, prio);
      auto [id, sampled] = st.buffer->sample(st.train_rng);
      train_id = id;
      // Replayed next-actions are recomputed against the current function.
      sampled.a_next = maximize_action(q, sampled.s_next, box, cfg.search, st.train_rng).action;
      train_tuple = std::move(sampled);
    } else {
      train_tuple = std::move(tuple);
    }

    const Learner::Outcome outcome = st.learner->step(train_tuple);
    if (st.buffer) st.buffer->update_priority(train_id, std::abs(outcome.delta));

    StepRecord rec;
    rec.t = t;
    rec.order = st.learner->engine().order();
    rec.epsilon = outcome.sizes.epsilon;
    rec.delta = outcome.delta;
    rec.z = outcome.z;
    rec.removals = static_cast<int>(outcome.report.removals.size());
    rec.reward = tr.reward;
    rec.exploratory = choice.exploratory;
    rec.episode_done = tr.done;
    st.metrics.steps.push_back(rec);
    st.metrics.appended_atoms += outcome.appended;
    st.metrics.removed_atoms += rec.removals;
    if (outcome.report.aborted) ++st.metrics.aborted_compressions;

    if (hooks.on_step) hooks.on_step(t, outcome);

    st.s = std::move(s_next);
    st.t = t + 1;

    if (cfg.eval_every > 0 && (t + 1) % cfg.eval_every == 0) {
      const EvalResult ev =
          eval_bellman_error(st.learner->snapshot(), cfg.env,
                             static_cast<int>(cfg.eval_trajectories), cfg.search, discount,
                             st.eval_rng);
      st.last_raw = ev.raw;
      st.last_norm = ev.normalized;
      st.last_floored = ev.denom_floored;
    }
    if ((t + 1) % cfg.interval_steps == 0) close_interval(t + 1);
    if (!checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
        (t + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(st, checkpoint_path);
  }

  if (cfg.total_steps % cfg.interval_steps != 0) close_interval(cfg.total_steps);

  if (st.buffer) st.metrics.stale_priority_updates = st.buffer->stale_updates();

  TrainResult out;
  out.q = st.learner->snapshot();
  out.metrics = std::move(st.metrics);
  out.seed = st.seed;
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace

TrainResult train(const RunConfig& cfg, unsigned long long seed, const TrainHooks& hooks,
                  const std::string& checkpoint_path) {
  cfg.validate();
  const EnvSpec& spec = make_env_model(cfg.env)->spec();

  LoopState st;
  st.cfg = cfg;
  st.seed = seed;
  st.learner.emplace(cfg.learner_config_with_variant(), cfg.kernel, spec.state_dim,
                     spec.action_dim);
  if (cfg.replay.mode != ReplayMode::off) st.buffer.emplace(cfg.replay);
  st.env.emplace(Environment::make(cfg.env));
  st.train_rng = Rng(Rng::derive(seed, 0));
  st.eval_rng = Rng(Rng::derive(seed, 1));
  st.s = st.env->reset(st.train_rng);
  return run_loop(st, hooks, checkpoint_path);
}

TrainResult resume_train(const RunConfig& cfg, const std::string& checkpoint_path,
                         const TrainHooks& hooks) {
  cfg.validate();
  LoopState st = load_checkpoint(cfg, checkpoint_path);
  return run_loop(st, hooks, checkpoint_path);
}

SweepSummary aggregate_seeds(const std::vector<RunMetrics>& runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate_seeds: need at least one run");
  const size_t n_steps = runs[0].steps.size();
  const size_t n_intervals = runs[0].intervals.size();
  for (const RunMetrics& r : runs) {
    if (r.steps.size() != n_steps || r.intervals.size() != n_intervals)
      throw std::invalid_argument("aggregate_seeds: misaligned metric grids");
    for (size_t i = 0; i < n_steps; ++i)
      if (r.steps[i].t != runs[0].steps[i].t)
        throw std::invalid_argument("aggregate_seeds: misaligned step grid");
    for (size_t i = 0; i < n_intervals; ++i)
      if (r.intervals[i].t_end != runs[0].intervals[i].t_end)
        throw std::invalid_argument("aggregate_seeds: misaligned interval grid");
  }

  const auto stats = [&](auto&& value_at, size_t count) {
    AggregateSeries s;
    s.mean.resize(count);
    s.stddev.resize(count);
    for (size_t i = 0; i < count; ++i) {
      double sum = 0.0;
      for (const RunMetrics& r : runs) sum += value_at(r, i);
      const double mean = sum / static_cast<double>(runs.size());
      double var = 0.0;
      for (const RunMetrics& r : runs) {
        const double d = value_at(r, i) - mean;
        var += d * d;
      }
      s.mean[i] = mean;
      s.stddev[i] = std::sqrt(var / static_cast<double>(runs.size()));
    }
    return s;
  };

  SweepSummary out;
  out.n_seeds = static_cast<int>(runs.size());
  out.order = stats([](const RunMetrics& r, size_t i) { return double(r.steps[i].order); },
                    n_steps);
  out.order.t.resize(n_steps);
  for (size_t i = 0; i < n_steps; ++i) out.order.t[i] = runs[0].steps[i].t;
  out.reward = stats([](const RunMetrics& r, size_t i) { return r.intervals[i].avg_reward; },
                     n_intervals);
  out.norm_bellman =
      stats([](const RunMetrics& r, size_t i) { return r.intervals[i].norm_bellman; },
            n_intervals);
  out.reward.t.resize(n_intervals);
  out.norm_bellman.t.resize(n_intervals);
  for (size_t i = 0; i < n_intervals; ++i) {
    out.reward.t[i] = runs[0].intervals[i].t_end;
    out.norm_bellman.t[i] = runs[0].intervals[i].t_end;
  }

  if (n_steps > 0) {
    const long total = runs[0].steps.back().t + 1;
    const long w_start = total - std::max<long>(1, total / 10);
    double order_sum = 0.0;
    long order_n = 0;
    for (const RunMetrics& r : runs)
      for (const StepRecord& srec : r.steps)
        if (srec.t >= w_start) {
          order_sum += srec.order;
          ++order_n;
        }
    out.final_order = order_sum / static_cast<double>(order_n);

    double loss_sum = 0.0, reward_sum = 0.0;
    long loss_n = 0, reward_n = 0;
    for (const RunMetrics& r : runs)
      for (const IntervalRecord& irec : r.intervals)
        if (irec.t_end > w_start) {
          if (!std::isnan(irec.norm_bellman)) {
            loss_sum += irec.norm_bellman;
            ++loss_n;
          }
          reward_sum += irec.avg_reward;
          ++reward_n;
        }
    out.final_loss = loss_n > 0 ? loss_sum / static_cast<double>(loss_n) : kNaN;
    out.final_reward = reward_n > 0 ? reward_sum / static_cast<double>(reward_n) : kNaN;
  }
  return out;
}

}  // namespace kql
