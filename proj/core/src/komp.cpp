#include "kql/komp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

namespace kql {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double clamp0(double v) { return v > 0.0 ? v : 0.0; }

bool same_column(const Eigen::MatrixXd& m, Eigen::Index col, const double* data,
                 Eigen::Index rows) {
  return std::memcmp(m.col(col).data(), data, sizeof(double) * rows) == 0;
}

// Removes row/col pos from the live n x n block of e via the block inverse
// downdate E' = minor - c c^T / d. In-place: in the ascending scan no
// destination precedes its source.
void downdate_inplace(Eigen::MatrixXd& e, int n, int pos) {
  const double d = e(pos, pos);
  Eigen::VectorXd c(n - 1);
  int r = 0;
  for (int i = 0; i < n; ++i) {
    if (i == pos) continue;
    c(r++) = e(i, pos);
  }
  for (int j = 0; j < n - 1; ++j) {
    const int js = j < pos ? j : j + 1;
    for (int i = 0; i < n - 1; ++i) {
      const int is = i < pos ? i : i + 1;
      e(i, j) = e(is, js) - c(i) * c(j) / d;
    }
  }
}

Eigen::VectorXd erase_entry(const Eigen::VectorXd& v, int pos) {
  Eigen::VectorXd out(v.size() - 1);
  out.head(pos) = v.head(pos);
  out.tail(v.size() - 1 - pos) = v.tail(v.size() - 1 - pos);
  return out;
}

}  // namespace

void CompressionBudget::validate() const {
  if (!std::isfinite(epsilon) || epsilon < 0.0)
    throw std::invalid_argument("CompressionBudget: epsilon must be finite and >= 0");
}

double removal_error(const QFunction& qref, const std::vector<int>& keep) {
  qref.validate();
  std::vector<char> seen(qref.order(), 0);
  for (int i : keep) {
    if (i < 0 || i >= qref.order())
      throw std::invalid_argument("removal_error: keep index out of range");
    if (seen[i]++) throw std::invalid_argument("removal_error: duplicate keep index");
  }
  const double qnorm2 = hilbert_norm_sq(qref);
  if (keep.empty()) return std::sqrt(qnorm2);

  Eigen::MatrixXd d(qref.dim(), keep.size());
  for (size_t j = 0; j < keep.size(); ++j) d.col(j) = qref.dict.col(keep[j]);
  const Eigen::VectorXd b = cross_matrix(qref.kernel, d, qref.dict) * qref.weights;
  const Eigen::VectorXd w = solve_gram(qref.kernel, d, b);
  const Eigen::MatrixXd k = gram_matrix(qref.kernel, d);
  return std::sqrt(clamp0(qnorm2 - 2.0 * w.dot(b) + w.dot(k * w)));
}

Eigen::VectorXd least_squares_refit(const QFunction& qref,
                                    const Eigen::Ref<const Eigen::MatrixXd>& dict) {
  qref.validate();
  if (dict.rows() != qref.dim())
    throw std::invalid_argument("least_squares_refit: dictionary dimension mismatch");
  const Eigen::VectorXd b = cross_matrix(qref.kernel, dict, qref.dict) * qref.weights;
  return solve_gram(qref.kernel, dict, b);
}

std::pair<QFunction, CompressionReport> komp_compress(const QFunction& qtilde,
                                                      const CompressionBudget& budget) {
  budget.validate();
  qtilde.validate();
  const double eps = budget.epsilon;

  CompressionReport rep;
  rep.initial_order = qtilde.order();
  if (qtilde.empty()) return {qtilde, rep};

  try {
    // Exact-preserving pre-pass: merge bitwise-duplicate atoms into their
    // first occurrence, then drop exactly-zero weights. Neither changes the
    // represented function, so these removals cost no error budget.
    const int m0 = qtilde.order();
    std::vector<int> keep;
    std::vector<double> wv;
    keep.reserve(m0);
    wv.reserve(m0);
    for (int i = 0; i < m0; ++i) {
      int hit = -1;
      for (size_t j = 0; j < keep.size(); ++j) {
        if (same_column(qtilde.dict, keep[j], qtilde.dict.col(i).data(), qtilde.dict.rows())) {
          hit = static_cast<int>(j);
          break;
        }
      }
      if (hit >= 0) {
        wv[hit] += qtilde.weights(i);
        rep.removals.push_back(i);
      } else {
        keep.push_back(i);
        wv.push_back(qtilde.weights(i));
      }
    }
    {
      std::vector<int> keep2;
      std::vector<double> wv2;
      for (size_t j = 0; j < keep.size(); ++j) {
        if (wv[j] == 0.0)
          rep.removals.push_back(keep[j]);
        else {
          keep2.push_back(keep[j]);
          wv2.push_back(wv[j]);
        }
      }
      keep.swap(keep2);
      wv.swap(wv2);
    }

    QFunction out = QFunction::zero(qtilde.kernel, qtilde.state_dim, qtilde.action_dim);
    if (keep.empty()) {
      rep.final_order = 0;
      return {out, rep};  // function was exactly zero
    }

    const int md = static_cast<int>(keep.size());
    Eigen::MatrixXd d0(qtilde.dim(), md);
    Eigen::VectorXd w0(md);
    for (int j = 0; j < md; ++j) {
      d0.col(j) = qtilde.dict.col(keep[j]);
      w0(j) = wv[j];
    }
    const Eigen::MatrixXd kmat = gram_matrix(qtilde.kernel, d0);
    const Eigen::VectorXd b = kmat * w0;
    const double qnorm2 = clamp0(w0.dot(b));

    // Regularized refit onto the atoms at positions sub (into d0) and the
    // resulting Hilbert error against qtilde.
    auto refit = [&](const std::vector<int>& sub) {
      Eigen::MatrixXd ds(qtilde.dim(), sub.size());
      Eigen::VectorXd bs(sub.size());
      for (size_t j = 0; j < sub.size(); ++j) {
        ds.col(j) = d0.col(sub[j]);
        bs(j) = b(sub[j]);
      }
      Eigen::VectorXd ws = solve_gram(qtilde.kernel, ds, bs);
      double quad = 0.0;
      for (size_t r = 0; r < sub.size(); ++r)
        for (size_t c = 0; c < sub.size(); ++c)
          quad += ws(r) * kmat(sub[r], sub[c]) * ws(c);
      const double err2 = clamp0(qnorm2 - 2.0 * ws.dot(bs) + quad);
      return std::make_pair(std::sqrt(err2), std::move(ws));
    };

    std::vector<int> act(md);
    std::iota(act.begin(), act.end(), 0);
    int greedy_prunes = 0;
    Eigen::VectorXd w_final;
    double achieved = 0.0;

    while (!act.empty()) {
      double best_g = kInf;
      int best = -1;
      Eigen::VectorXd best_w;
      std::vector<int> sub(act.size() - 1);
      for (size_t cand = 0; cand < act.size(); ++cand) {
        size_t t = 0;
        for (size_t j = 0; j < act.size(); ++j)
          if (j != cand) sub[t++] = act[j];
        auto [g, ws] = refit(sub);
        if (g < best_g) {
          best_g = g;
          best = static_cast<int>(cand);
          best_w = std::move(ws);
        }
      }
      if (best_g > eps) break;  // equality prunes
      rep.removals.push_back(keep[act[best]]);
      act.erase(act.begin() + best);
      w_final = std::move(best_w);
      achieved = best_g;
      ++greedy_prunes;
    }

    if (act.empty()) {
      rep.final_order = 0;
      rep.achieved_error = std::sqrt(qnorm2);
      return {out, rep};
    }
    out.dict.resize(qtilde.dim(), act.size());
    out.weights.resize(act.size());
    for (size_t j = 0; j < act.size(); ++j) out.dict.col(j) = d0.col(act[j]);
    if (greedy_prunes == 0) {
      // Nothing greedily pruned: weights stay exact, no refit.
      for (size_t j = 0; j < act.size(); ++j) out.weights(j) = w0(act[j]);
      rep.final_order = out.order();
      rep.achieved_error = 0.0;
    } else {
      out.weights = w_final;
      rep.final_order = out.order();
      rep.achieved_error = achieved;
    }
    return {out, rep};
  } catch (const SolveFailure&) {
    CompressionReport ab;
    ab.initial_order = qtilde.order();
    ab.final_order = qtilde.order();
    ab.aborted = true;
    return {qtilde, ab};
  }
}

// ---------------------------------------------------------------------------
// KompEngine
// ---------------------------------------------------------------------------

KompEngine::KompEngine(KernelConfig kernel, int state_dim, int action_dim, int refresh_period)
    : kernel_(std::move(kernel)),
      state_dim_(state_dim),
      action_dim_(action_dim),
      refresh_period_(refresh_period) {
  kernel_.validate();
  if (state_dim_ <= 0 || action_dim_ <= 0)
    throw std::invalid_argument("KompEngine: dims must be positive");
  if (kernel_.dim() != state_dim_ + action_dim_)
    throw std::invalid_argument("KompEngine: kernel dim mismatch");
  if (refresh_period_ < 1) refresh_period_ = 1;
  ensure_capacity(16);
}

void KompEngine::ensure_capacity(int m) {
  if (m <= cap_) return;
  int next = cap_ > 0 ? cap_ : 16;
  while (next < m) next *= 2;
  Eigen::MatrixXd dict(kernel_.dim(), next), k(next, next), e(next, next);
  Eigen::VectorXd w(next);
  if (m_ > 0) {
    dict.leftCols(m_) = dict_.leftCols(m_);
    k.topLeftCorner(m_, m_) = k_.topLeftCorner(m_, m_);
    e.topLeftCorner(m_, m_) = e_.topLeftCorner(m_, m_);
    w.head(m_) = w_.head(m_);
  }
  dict_.swap(dict);
  k_.swap(k);
  e_.swap(e);
  w_.swap(w);
  cap_ = next;
}

void KompEngine::refresh_inverse() {
  calls_since_refresh_ = 0;
  if (m_ == 0) {
    inverse_ok_ = true;
    return;
  }
  Eigen::MatrixXd a = k_.topLeftCorner(m_, m_);
  a.diagonal().array() += kernel_.jitter;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  e_.topLeftCorner(m_, m_) = ldlt.solve(Eigen::MatrixXd::Identity(m_, m_));
  const double resid =
      (a * e_.topLeftCorner(m_, m_) - Eigen::MatrixXd::Identity(m_, m_)).cwiseAbs().maxCoeff();
  inverse_ok_ = std::isfinite(resid) && resid <= 1e-6 * std::max(1, m_);
}

int KompEngine::find_duplicate(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  for (int j = 0; j < m_; ++j)
    if (same_column(dict_, j, v.data(), kernel_.dim())) return j;
  return -1;
}

void KompEngine::reset(const QFunction& q) {
  q.validate();
  if (q.state_dim != state_dim_ || q.action_dim != action_dim_ ||
      q.kernel.bandwidths != kernel_.bandwidths)
    throw std::invalid_argument("KompEngine::reset: function shape/kernel mismatch");
  m_ = 0;  // old contents are dead; don't let ensure_capacity copy them
  ensure_capacity(std::max(q.order(), 1));
  m_ = q.order();
  if (m_ > 0) {
    dict_.leftCols(m_) = q.dict;
    w_.head(m_) = q.weights;
    k_.topLeftCorner(m_, m_) = gram_matrix(kernel_, q.dict);
  }
  refresh_inverse();
  virt_.resize(m_);
  std::iota(virt_.begin(), virt_.end(), 0);
  pending_removals_.clear();
  virtual_count_ = m_;
  appended_since_compress_ = 0;
  maybe_duplicates_ = true;  // adopted dictionaries may carry duplicates
}

void KompEngine::scale_weights(double factor) {
  if (!std::isfinite(factor)) throw std::invalid_argument("KompEngine: non-finite scale");
  w_.head(m_) *= factor;
}

void KompEngine::append_atom(const Eigen::Ref<const Eigen::VectorXd>& v, double w) {
  if (v.size() != kernel_.dim())
    throw std::invalid_argument("KompEngine::append_atom: dimension mismatch");
  if (!std::isfinite(w) || !v.allFinite())
    throw std::invalid_argument("KompEngine::append_atom: non-finite input");
  ++appended_since_compress_;
  const int virt = virtual_count_++;
  if (w == 0.0) {
    pending_removals_.push_back(virt);
    return;
  }
  const int dup = find_duplicate(v);
  if (dup >= 0) {
    w_(dup) += w;
    pending_removals_.push_back(virt);
    return;
  }
  ensure_capacity(m_ + 1);
  // Entry by entry, not kernel_vec: the cached Gram matrix must be bitwise
  // reproducible from the dictionary alone (reset and restore rebuild it via
  // gram_matrix), and the vectorized exp can differ in the last ulp.
  Eigen::VectorXd kcol(m_);
  for (int i = 0; i < m_; ++i) kcol(i) = kernel_eval(kernel_, dict_.col(i), v);
  dict_.col(m_) = v;
  if (m_ > 0) {
    k_.block(0, m_, m_, 1) = kcol;
    k_.block(m_, 0, 1, m_) = kcol.transpose();
  }
  k_(m_, m_) = 1.0;
  w_(m_) = w;
  if (inverse_ok_) {
    if (m_ == 0) {
      e_(0, 0) = 1.0 / (1.0 + kernel_.jitter);
    } else {
      const Eigen::VectorXd u = e_.topLeftCorner(m_, m_) * kcol;
      const double schur = (1.0 + kernel_.jitter) - kcol.dot(u);
      if (schur > 1e-13) {
        e_.topLeftCorner(m_, m_) += (u * u.transpose()) / schur;
        e_.block(0, m_, m_, 1) = -u / schur;
        e_.block(m_, 0, 1, m_) = (-u / schur).transpose();
        e_(m_, m_) = 1.0 / schur;
      } else {
        inverse_ok_ = false;  // near-singular border; rebuilt below
      }
    }
  }
  virt_.push_back(virt);
  ++m_;
  if (!inverse_ok_) refresh_inverse();
}

double KompEngine::eval(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (m_ == 0) return 0.0;
  return w_.head(m_).dot(kernel_vec(kernel_, dict_.leftCols(m_), x));
}

QFunction KompEngine::snapshot() const {
  QFunction q;
  q.kernel = kernel_;
  q.state_dim = state_dim_;
  q.action_dim = action_dim_;
  q.dict = dict_.leftCols(m_);
  q.weights = w_.head(m_);
  return q;
}

KompEngine::SolverState KompEngine::solver_state() const {
  if (appended_since_compress_ != 0)
    throw std::logic_error("KompEngine::solver_state: only valid between steps");
  SolverState st;
  st.inverse = e_.topLeftCorner(m_, m_);
  st.calls_since_refresh = calls_since_refresh_;
  st.inverse_ok = inverse_ok_;
  st.maybe_duplicates = maybe_duplicates_;
  return st;
}

void KompEngine::restore(const QFunction& q, const SolverState& st) {
  if (st.inverse.rows() != q.order() || st.inverse.cols() != q.order())
    throw std::invalid_argument("KompEngine::restore: inverse size mismatch");
  reset(q);  // rebuilds the Gram matrix exactly; also validates shape
  e_.topLeftCorner(m_, m_) = st.inverse;
  calls_since_refresh_ = st.calls_since_refresh;
  inverse_ok_ = st.inverse_ok;
  maybe_duplicates_ = st.maybe_duplicates;
}

CompressionReport KompEngine::compress(double epsilon) {
  CompressionBudget{epsilon}.validate();
  CompressionReport rep;
  rep.initial_order = virtual_count_;
  rep.removals = std::move(pending_removals_);
  pending_removals_.clear();
  appended_since_compress_ = 0;

  auto finish = [&](double achieved) {
    rep.final_order = m_;
    rep.achieved_error = achieved;
    virt_.resize(m_);
    std::iota(virt_.begin(), virt_.end(), 0);
    virtual_count_ = m_;
  };

  if (++calls_since_refresh_ >= refresh_period_ || !inverse_ok_) refresh_inverse();
  if (!inverse_ok_) {
    rep.aborted = true;
    finish(0.0);
    return rep;
  }

  // One-time dedup after reset(); append_atom keeps the invariant afterwards.
  // Merged slots get weight exactly 0 and fall to the zero pass below.
  if (maybe_duplicates_) {
    maybe_duplicates_ = false;
    for (int j = 1; j < m_; ++j) {
      for (int i = 0; i < j; ++i) {
        if (same_column(dict_, i, dict_.col(j).data(), kernel_.dim())) {
          w_(i) += w_(j);
          w_(j) = 0.0;
          break;
        }
      }
    }
  }

  if (m_ == 0) {
    finish(0.0);
    return rep;
  }

  const double jitter = kernel_.jitter;
  const int m = m_;
  const Eigen::VectorXd b_full = k_.topLeftCorner(m, m) * w_.head(m);
  const double qnorm2 = clamp0(w_.head(m).dot(b_full));
  const size_t pending_count = rep.removals.size();

  // Exact-preserving zero-weight drops define the greedy starting set.
  std::vector<int> act0;
  act0.reserve(m);
  for (int j = 0; j < m; ++j) {
    if (w_(j) == 0.0)
      rep.removals.push_back(virt_[j]);
    else
      act0.push_back(j);
  }
  Eigen::VectorXd b0(act0.size());
  for (size_t i = 0; i < act0.size(); ++i) b0(i) = b_full(act0[i]);
  const size_t removals_mark = rep.removals.size();

  auto build_inverse = [&](const std::vector<int>& act, Eigen::MatrixXd& ea) -> bool {
    const int n = static_cast<int>(act.size());
    if (n == 0) {
      ea.resize(0, 0);
      return true;
    }
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = k_(act[i], act[j]);
    a.diagonal().array() += jitter;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    ea = ldlt.solve(Eigen::MatrixXd::Identity(n, n));
    const double resid = (a * ea - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    return std::isfinite(resid) && resid <= 1e-6 * std::max(1, n);
  };

  for (int attempt = 0; attempt < 2; ++attempt) {
    std::vector<int> act = act0;
    Eigen::VectorXd b = b0;
    rep.removals.resize(removals_mark);
    Eigen::MatrixXd ea;
    int n = static_cast<int>(act.size());

    if (attempt == 0) {
      // Start from the maintained inverse; downdate out the zero slots.
      ea = e_.topLeftCorner(m, m);
      int live = m;
      bool bad = false;
      for (int j = m - 1; j >= 0; --j) {
        if (w_(j) != 0.0) continue;
        if (!(ea(j, j) > 0.0) || !std::isfinite(ea(j, j))) {
          bad = true;
          break;
        }
        downdate_inplace(ea, live, j);
        --live;
      }
      if (bad || live != n) {
        if (!build_inverse(act, ea)) continue;
      }
    } else {
      if (!build_inverse(act, ea)) break;  // fresh inverse failed too: abort
    }

    int greedy = 0;
    double achieved = 0.0;
    bool anomaly = false;

    while (n > 0) {
      const Eigen::VectorXd w_star = ea.topLeftCorner(n, n) * b;
      const double f_star = qnorm2 - b.dot(w_star);
      double best_g2 = kInf;
      int best = -1;
      for (int pos = 0; pos < n; ++pos) {
        const double ejj = ea(pos, pos);
        if (!(ejj > 0.0) || !std::isfinite(ejj)) {
          anomaly = true;
          break;
        }
        const double wj = w_star(pos);
        const double wc_sq = (w_star - (wj / ejj) * ea.col(pos).head(n)).squaredNorm();
        const double g2 = clamp0(f_star + wj * wj / ejj - jitter * wc_sq);
        if (g2 < best_g2) {  // strict <, so equal gammas keep the lowest index
          best_g2 = g2;
          best = pos;
        }
      }
      if (anomaly) break;
      const double gamma = std::sqrt(best_g2);
      if (gamma > epsilon) break;  // equality prunes
      rep.removals.push_back(virt_[act[best]]);
      downdate_inplace(ea, n, best);
      act.erase(act.begin() + best);
      b = erase_entry(b, best);
      --n;
      ++greedy;
      achieved = gamma;
    }

    if (anomaly) {
      if (attempt == 0) continue;  // rebuild from scratch and retry once
      break;
    }

    Eigen::VectorXd w_new(n);
    if (greedy == 0) {
      // Nothing greedily pruned: weights stay exact, no refit.
      for (int i = 0; i < n; ++i) w_new(i) = w_(act[i]);
      achieved = 0.0;
    } else if (n > 0) {
      w_new = ea.topLeftCorner(n, n) * b;
      double quad = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) quad += w_new(i) * k_(act[i], act[j]) * w_new(j);
      achieved = std::sqrt(clamp0(qnorm2 - 2.0 * w_new.dot(b) + quad));
      if (achieved > epsilon + 1e-10) {
        if (attempt == 0) continue;  // drifted inverse; refresh and redo
        // Out of budget even with a fresh inverse: cancel the greedy prunes.
        rep.removals.resize(removals_mark);
        act = act0;
        n = static_cast<int>(act.size());
        w_new.resize(n);
        for (int i = 0; i < n; ++i) w_new(i) = w_(act[i]);
        if (!build_inverse(act, ea)) break;
        achieved = 0.0;
      }
    } else {
      achieved = std::sqrt(qnorm2);
    }

    // Physical compaction (act ascending, so in-place gathers are safe).
    for (int i = 0; i < n; ++i) {
      const int s = act[i];
      if (s != i) dict_.col(i) = dict_.col(s);
    }
    for (int j = 0; j < n; ++j)
      for (int i = 0; i <= j; ++i) {
        const double v = k_(act[i], act[j]);
        k_(i, j) = v;
        k_(j, i) = v;
      }
    e_.topLeftCorner(n, n) = ea.topLeftCorner(n, n);
    w_.head(n) = w_new;
    m_ = n;
    finish(achieved);
    return rep;
  }

  // Unrecoverable numerical trouble: leave the dictionary as-is. Zero-weight
  // slots stay physically present, so their removals are not reported.
  rep.removals.resize(pending_count);
  rep.aborted = true;
  refresh_inverse();
  finish(0.0);
  return rep;
}

}  // namespace kql
