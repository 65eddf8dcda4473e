#pragma once

#include <vector>

#include "kql/qfunction.hpp"

namespace kql {

// Outcome of one komp_compress / KompEngine::compress call.
//
// removals holds indices into the *input* dictionary in removal order:
// exact-preserving removals first (bitwise-duplicate merges, zero-weight
// drops), then greedy prunes. achieved_error is the measured Hilbert
// distance between input and output; it is <= epsilon + 1e-9 whenever
// aborted is false.
struct CompressionReport {
  int initial_order = 0;
  int final_order = 0;
  double achieved_error = 0.0;
  std::vector<int> removals;
  bool aborted = false;  // Gram solve failed; input returned unchanged
};

struct CompressionBudget {
  double epsilon = 0.0;
  void validate() const;
};

// Error of the best approximation to qref supported on the given subset of
// its own atoms: solves the jitter-regularized normal equations for the
// kept weights and returns the Hilbert distance to qref. keep may be empty
// (returns ||qref||_H). Indices must be unique and in range.
[[nodiscard]] double removal_error(const QFunction& qref, const std::vector<int>& keep);

// Weights of the regularized least-squares projection of qref onto the span
// of the columns of dict: (K_DD + jitter I)^{-1} K_{D,Dref} w_ref.
[[nodiscard]] Eigen::VectorXd least_squares_refit(const QFunction& qref,
                                                  const Eigen::Ref<const Eigen::MatrixXd>& dict);

// Destructive greedy compression. Repeatedly removes the atom whose
// removal-and-refit keeps the approximation error lowest, while that error
// stays <= epsilon (ties prune the lowest index; equality with epsilon
// prunes). Preceded by an exact dedup pass: bitwise-identical atoms are
// merged and exactly-zero weights dropped, neither of which changes the
// function. Guarantees hilbert_dist(result, qtilde) <= epsilon + 1e-9.
//
// This is the direct-form reference implementation (one regularized solve
// per candidate per round); the training loop uses KompEngine below, which
// computes the same quantities incrementally.
[[nodiscard]] std::pair<QFunction, CompressionReport> komp_compress(
    const QFunction& qtilde, const CompressionBudget& budget);

// Incremental compression engine owning the learner's kernel expansion.
//
// Keeps the dictionary Gram matrix K and the explicit inverse
// E = (K + jitter I)^{-1} up to date across steps (bordered update on
// append, block downdate on prune), so one compress() round costs O(M^2)
// instead of O(M^4). All candidate errors are the same regularized-refit
// gammas komp_compress computes, via the constrained-minimizer identity.
// The final achieved error is re-measured exactly against the cached Gram
// matrix; on anomalies (non-positive pivots, budget verification failure)
// E is rebuilt from scratch and the pass redone once.
class KompEngine {
 public:
  KompEngine(KernelConfig kernel, int state_dim, int action_dim, int refresh_period = 128);

  // Replace contents with an existing function (checkpoint restore, tests).
  void reset(const QFunction& q);

  void scale_weights(double factor);

  // Appends one atom. A bitwise-duplicate of a live atom is merged into it
  // instead (weight summed) and recorded as a pending removal for the next
  // compress() report; a zero weight on a fresh atom is also exact-dropped.
  void append_atom(const Eigen::Ref<const Eigen::VectorXd>& v, double w);

  CompressionReport compress(double epsilon);

  // The maintained inverse is path dependent (it drifts within a refresh
  // period), so resuming a run bit-for-bit requires saving it alongside the
  // function. Only valid between steps, i.e. with no atoms appended since
  // the last compress().
  struct SolverState {
    Eigen::MatrixXd inverse;  // (K + jitter I)^{-1} over the live dictionary
    int calls_since_refresh = 0;
    bool inverse_ok = true;
    bool maybe_duplicates = false;
  };
  [[nodiscard]] SolverState solver_state() const;
  void restore(const QFunction& q, const SolverState& st);

  [[nodiscard]] int order() const noexcept { return m_; }
  [[nodiscard]] double eval(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  [[nodiscard]] QFunction snapshot() const;
  [[nodiscard]] const KernelConfig& kernel() const noexcept { return kernel_; }

 private:
  void ensure_capacity(int m);
  void refresh_inverse();  // E = (K + jitter I)^{-1} over live atoms
  [[nodiscard]] int find_duplicate(const Eigen::Ref<const Eigen::VectorXd>& v) const;

  KernelConfig kernel_;
  int state_dim_;
  int action_dim_;
  int refresh_period_;

  int m_ = 0;          // live atoms
  int cap_ = 0;        // allocated capacity
  Eigen::MatrixXd dict_;  // dim x cap, live in leftCols(m_)
  Eigen::MatrixXd k_;     // cap x cap Gram, live in topLeftCorner(m_, m_)
  Eigen::MatrixXd e_;     // cap x cap inverse of (K + jitter I), live block likewise
  Eigen::VectorXd w_;     // cap, live in head(m_)

  // Per-step bookkeeping for CompressionReport index space: virt_[slot] is
  // the input-dictionary index of each live slot, counting atoms appended
  // since the last compress; merged/dropped appends go straight into
  // pending_removals_.
  std::vector<int> virt_;
  std::vector<int> pending_removals_;
  int virtual_count_ = 0;
  int appended_since_compress_ = 0;
  int calls_since_refresh_ = 0;
  bool inverse_ok_ = true;
  bool maybe_duplicates_ = false;
};

}  // namespace kql
