#include "kql/action_search.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace kql {

namespace {

// q(s, .) with the state part of every atom folded into the weights. Turns
// each evaluation over M atoms from a full-dimension kernel into an
// action-dimension one.
struct StateSlice {
  Eigen::MatrixXd adict;     // action coords, action_dim x M
  Eigen::VectorXd ws;        // weight * state-part kernel factor
  Eigen::VectorXd inv_sig2;  // action bandwidths^-2

  StateSlice(const QFunction& q, const Eigen::Ref<const Eigen::VectorXd>& s) {
    const int p = q.state_dim;
    const int da = q.action_dim;
    const int m = q.order();
    adict = q.dict.bottomRows(da);
    const Eigen::VectorXd sig_s = q.kernel.bandwidths.head(p);
    const Eigen::VectorXd sig_a = q.kernel.bandwidths.tail(da);
    inv_sig2 = sig_a.array().square().inverse();
    ws.resize(m);
    for (int i = 0; i < m; ++i) {
      const double d2 =
          ((s - q.dict.col(i).head(p)).array() / sig_s.array()).square().sum();
      ws(i) = q.weights(i) * std::exp(-0.5 * d2);
    }
  }

  double eval(const Eigen::Ref<const Eigen::VectorXd>& a) const {
    double acc = 0.0;
    for (int i = 0; i < ws.size(); ++i) {
      const double d2 = ((a - adict.col(i)).array().square() * inv_sig2.array()).sum();
      acc += ws(i) * std::exp(-0.5 * d2);
    }
    return acc;
  }

  Eigen::VectorXd grad(const Eigen::Ref<const Eigen::VectorXd>& a) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(a.size());
    for (int i = 0; i < ws.size(); ++i) {
      const double d2 = ((a - adict.col(i)).array().square() * inv_sig2.array()).sum();
      const double t = ws(i) * std::exp(-0.5 * d2);
      g.array() += t * (adict.col(i) - a).array() * inv_sig2.array();
    }
    return g;
  }
};

Eigen::VectorXd clip_to(const Box& box, Eigen::VectorXd a) {
  return a.cwiseMax(box.lo).cwiseMin(box.hi);
}

}  // namespace

void Box::validate() const {
  if (lo.size() == 0 || lo.size() != hi.size())
    throw std::invalid_argument("Box: lo/hi size mismatch");
  if (!lo.allFinite() || !hi.allFinite())
    throw std::invalid_argument("Box: bounds must be finite");
  if (((hi - lo).array() <= 0.0).any())
    throw std::invalid_argument("Box: need lo < hi per dimension");
}

void SearchConfig::validate() const {
  if (n_seeds < 1) throw std::invalid_argument("SearchConfig: n_seeds must be >= 1");
  if (ascent_starts < 0 || ascent_steps < 0)
    throw std::invalid_argument("SearchConfig: ascent counts must be >= 0");
  if (!(std::isfinite(ascent_rate) && ascent_rate > 0.0))
    throw std::invalid_argument("SearchConfig: ascent_rate must be > 0");
}

MaximizeResult maximize_action(const QFunction& q, const Eigen::Ref<const Eigen::VectorXd>& s,
                               const Box& box, const SearchConfig& cfg, Rng& rng) {
  cfg.validate();
  box.validate();
  q.validate();
  if (s.size() != q.state_dim)
    throw std::invalid_argument("maximize_action: state dimension mismatch");
  if (box.lo.size() != q.action_dim)
    throw std::invalid_argument("maximize_action: box dimension mismatch");

  if (q.empty()) return {box.midpoint(), 0.0};

  const StateSlice slice(q, s);
  const int da = q.action_dim;

  std::vector<Eigen::VectorXd> seeds(cfg.n_seeds);
  Eigen::VectorXd vals(cfg.n_seeds);
  for (int i = 0; i < cfg.n_seeds; ++i) {
    Eigen::VectorXd a(da);
    for (int d = 0; d < da; ++d) a(d) = rng.uniform(box.lo(d), box.hi(d));
    seeds[i] = std::move(a);
    vals(i) = slice.eval(seeds[i]);
  }

  int best_idx = 0;
  for (int i = 1; i < cfg.n_seeds; ++i)
    if (vals(i) > vals(best_idx)) best_idx = i;
  Eigen::VectorXd best_a = seeds[best_idx];
  double best_v = vals(best_idx);

  // Indices of the top ascent_starts seeds, best first, ties to lower index.
  const int starts = std::min(cfg.ascent_starts, cfg.n_seeds);
  std::vector<int> order(cfg.n_seeds);
  for (int i = 0; i < cfg.n_seeds; ++i) order[i] = i;
  std::partial_sort(order.begin(), order.begin() + starts, order.end(),
                    [&](int a, int b) { return vals(a) > vals(b) || (vals(a) == vals(b) && a < b); });

  for (int k = 0; k < starts; ++k) {
    Eigen::VectorXd a = seeds[order[k]];
    double v = vals(order[k]);
    for (int it = 0; it < cfg.ascent_steps; ++it) {
      Eigen::VectorXd cand = clip_to(box, a + cfg.ascent_rate * slice.grad(a));
      const double vc = slice.eval(cand);
      if (!(vc > v)) break;  // no improvement (or NaN): keep the last accepted point
      const bool converged = vc - v < 1e-12 * (1.0 + std::abs(v));
      a = std::move(cand);
      v = vc;
      if (converged) break;
    }
    if (v > best_v) {
      best_v = v;
      best_a = std::move(a);
    }
  }
  return {std::move(best_a), best_v};
}

namespace {

void check_quadrature(const QFunction& q, const Eigen::Ref<const Eigen::VectorXd>& s, double lo,
                      double hi, double eta, int points) {
  q.validate();
  if (q.action_dim != 1)
    throw std::invalid_argument("softmax quadrature requires a 1-d action space");
  if (s.size() != q.state_dim)
    throw std::invalid_argument("softmax quadrature: state dimension mismatch");
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi))
    throw std::invalid_argument("softmax quadrature: need lo < hi");
  if (!(std::isfinite(eta) && eta > 0.0))
    throw std::invalid_argument("softmax quadrature: eta must be > 0");
  if (points < 2) throw std::invalid_argument("softmax quadrature: need at least 2 points");
}

}  // namespace

double softmax_value(const QFunction& q, const Eigen::Ref<const Eigen::VectorXd>& s, double lo,
                     double hi, double eta, int points) {
  check_quadrature(q, s, lo, hi, eta, points);
  const double h = (hi - lo) / (points - 1);
  Eigen::VectorXd g(points);
  Eigen::VectorXd a(1);
  for (int i = 0; i < points; ++i) {
    a(0) = lo + h * i;
    g(i) = eta * q_eval(q, s, a);
  }
  const double m = g.maxCoeff();
  double acc = 0.0;
  for (int i = 0; i < points; ++i) {
    const double cw = (i == 0 || i == points - 1) ? 0.5 * h : h;
    acc += cw * std::exp(g(i) - m);
  }
  return (m + std::log(acc)) / eta;
}

Eigen::VectorXd softmax_weights(const QFunction& q, const Eigen::Ref<const Eigen::VectorXd>& s,
                                double lo, double hi, double eta, int points) {
  check_quadrature(q, s, lo, hi, eta, points);
  const double h = (hi - lo) / (points - 1);
  Eigen::VectorXd g(points);
  Eigen::VectorXd a(1);
  for (int i = 0; i < points; ++i) {
    a(0) = lo + h * i;
    g(i) = eta * q_eval(q, s, a);
  }
  const double m = g.maxCoeff();
  Eigen::VectorXd w(points);
  for (int i = 0; i < points; ++i) {
    const double cw = (i == 0 || i == points - 1) ? 0.5 * h : h;
    w(i) = cw * std::exp(g(i) - m);
  }
  return w / w.sum();
}

}  // namespace kql
