#include "kql/metrics_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace kql {

namespace {

using nlohmann::json;

void put_g17(std::ostream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// Not std::stod: that throws out_of_range on denormals, which legitimately
// appear once the averaged difference has decayed for long enough.
double to_double(const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (s.empty() || end != begin + s.size())
    throw std::invalid_argument("bad numeric field: " + s);
  return v;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

}  // namespace

void write_steps_csv(std::ostream& os, const std::vector<StepRecord>& steps) {
  os << "t,order,epsilon,delta,z,removals,reward,exploratory,episode_done\n";
  for (const StepRecord& r : steps) {
    os << r.t << ',' << r.order << ',';
    put_g17(os, r.epsilon);
    os << ',';
    put_g17(os, r.delta);
    os << ',';
    put_g17(os, r.z);
    os << ',' << r.removals << ',';
    put_g17(os, r.reward);
    os << ',' << (r.exploratory ? 1 : 0) << ',' << (r.episode_done ? 1 : 0) << '\n';
  }
}

std::vector<StepRecord> read_steps_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) ||
      line != "t,order,epsilon,delta,z,removals,reward,exploratory,episode_done")
    throw std::invalid_argument("read_steps_csv: bad header");
  std::vector<StepRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 9) throw std::invalid_argument("read_steps_csv: bad row: " + line);
    StepRecord r;
    r.t = std::stol(f[0]);
    r.order = std::stoi(f[1]);
    r.epsilon = to_double(f[2]);
    r.delta = to_double(f[3]);
    r.z = to_double(f[4]);
    r.removals = std::stoi(f[5]);
    r.reward = to_double(f[6]);
    r.exploratory = f[7] == "1";
    r.episode_done = f[8] == "1";
    out.push_back(r);
  }
  return out;
}

void write_intervals_csv(std::ostream& os, const std::vector<IntervalRecord>& intervals) {
  os << "t_end,avg_reward,raw_bellman,norm_bellman,order,denom_floored\n";
  for (const IntervalRecord& r : intervals) {
    os << r.t_end << ',';
    put_g17(os, r.avg_reward);
    os << ',';
    put_g17(os, r.raw_bellman);
    os << ',';
    put_g17(os, r.norm_bellman);
    os << ',' << r.order << ',' << (r.denom_floored ? 1 : 0) << '\n';
  }
}

std::vector<IntervalRecord> read_intervals_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) ||
      line != "t_end,avg_reward,raw_bellman,norm_bellman,order,denom_floored")
    throw std::invalid_argument("read_intervals_csv: bad header");
  std::vector<IntervalRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 6) throw std::invalid_argument("read_intervals_csv: bad row: " + line);
    IntervalRecord r;
    r.t_end = std::stol(f[0]);
    r.avg_reward = to_double(f[1]);
    r.raw_bellman = to_double(f[2]);
    r.norm_bellman = to_double(f[3]);
    r.order = std::stoi(f[4]);
    r.denom_floored = f[5] == "1";
    out.push_back(r);
  }
  return out;
}

void write_summary_json(std::ostream& os, const RunConfig& cfg,
                        const std::vector<TrainResult>& results, const SweepSummary& summary) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "kql-summary";
  j["config"] = json::parse(run_config_to_json(cfg));
  j["n_seeds"] = summary.n_seeds;
  j["final"] = {{"order", finite_or_null(summary.final_order)},
                {"loss", finite_or_null(summary.final_loss)},
                {"reward", finite_or_null(summary.final_reward)}};

  json per_seed = json::array();
  double total_wall = 0.0;
  for (const TrainResult& r : results) {
    per_seed.push_back({{"seed", r.seed},
                        {"episodes", r.metrics.episodes},
                        {"total_reward", r.metrics.total_reward},
                        {"final_order", r.q.order()},
                        {"appended_atoms", r.metrics.appended_atoms},
                        {"removed_atoms", r.metrics.removed_atoms},
                        {"aborted_compressions", r.metrics.aborted_compressions},
                        {"stale_priority_updates", r.metrics.stale_priority_updates},
                        {"wall_seconds", r.wall_seconds}});
    total_wall += r.wall_seconds;
  }
  j["per_seed"] = std::move(per_seed);
  j["timing"] = {{"total_wall_seconds", total_wall}};
  os << j.dump(2) << '\n';
}

void write_value_policy_grids(std::ostream& value_os, std::ostream& policy_os,
                              const QFunction& q,
                              const Eigen::Ref<const Eigen::VectorXd>& state_lo,
                              const Eigen::Ref<const Eigen::VectorXd>& state_hi,
                              double action_lo, double action_hi, int grid_n, int action_n) {
  q.validate();
  if (q.state_dim != 2 || q.action_dim != 1)
    throw std::invalid_argument("grids need a 2-d state and 1-d action space");
  if (grid_n < 2 || action_n < 2)
    throw std::invalid_argument("grids need at least 2 points per axis");
  if (state_lo.size() != 2 || state_hi.size() != 2)
    throw std::invalid_argument("grids: state bounds must be 2-d");

  auto header = [&](std::ostream& os) {
    os << state_lo(0) << ' ' << state_hi(0) << ' ' << state_lo(1) << ' ' << state_hi(1) << ' '
       << grid_n << ' ' << action_lo << ' ' << action_hi << ' ' << action_n << '\n';
  };
  header(value_os);
  header(policy_os);

  const int m = q.order();
  const Eigen::VectorXd sig_s = q.kernel.bandwidths.head(2);
  const double sig_a = q.kernel.bandwidths(2);

  Eigen::VectorXd ws(m);
  for (int iy = 0; iy < grid_n; ++iy) {
    const double y = state_lo(1) + (state_hi(1) - state_lo(1)) * iy / (grid_n - 1);
    for (int ix = 0; ix < grid_n; ++ix) {
      const double x = state_lo(0) + (state_hi(0) - state_lo(0)) * ix / (grid_n - 1);
      for (int i = 0; i < m; ++i) {
        const double dx = (x - q.dict(0, i)) / sig_s(0);
        const double dy = (y - q.dict(1, i)) / sig_s(1);
        ws(i) = q.weights(i) * std::exp(-0.5 * (dx * dx + dy * dy));
      }
      double best_v = -std::numeric_limits<double>::infinity();
      double best_a = action_lo;
      for (int ia = 0; ia < action_n; ++ia) {
        const double a = action_lo + (action_hi - action_lo) * ia / (action_n - 1);
        double v = 0.0;
        for (int i = 0; i < m; ++i) {
          const double da = (a - q.dict(2, i)) / sig_a;
          v += ws(i) * std::exp(-0.5 * da * da);
        }
        if (v > best_v) {
          best_v = v;
          best_a = a;
        }
      }
      if (m == 0) best_v = 0.0;
      if (ix > 0) {
        value_os << ' ';
        policy_os << ' ';
      }
      put_g17(value_os, best_v);
      put_g17(policy_os, best_a);
    }
    value_os << '\n';
    policy_os << '\n';
  }
}

void write_dict_points(std::ostream& os, const QFunction& q) {
  q.validate();
  for (int i = 0; i < q.order(); ++i) {
    for (int d = 0; d < q.dim(); ++d) {
      if (d > 0) os << ' ';
      put_g17(os, q.dict(d, i));
    }
    os << ' ';
    put_g17(os, q.weights(i));
    os << '\n';
  }
}

}  // namespace kql
