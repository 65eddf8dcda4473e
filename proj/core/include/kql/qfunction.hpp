#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "kql/kernel.hpp"

namespace kql {

// Q(s,a) = sum_m weights[m] * kappa(dict.col(m), [s;a]).
//
// Value type: updates produce new instances (append_atoms) or go through
// KompEngine. Atoms are joint state-action vectors; the first state_dim
// coordinates are state, the remaining action_dim are action.
struct QFunction {
  KernelConfig kernel;
  int state_dim = 0;
  int action_dim = 0;
  Eigen::MatrixXd dict;      // (state_dim + action_dim) x order
  Eigen::VectorXd weights;   // order

  [[nodiscard]] int order() const noexcept { return static_cast<int>(dict.cols()); }
  [[nodiscard]] int dim() const noexcept { return state_dim + action_dim; }
  [[nodiscard]] bool empty() const noexcept { return dict.cols() == 0; }

  static QFunction zero(KernelConfig kernel, int state_dim, int action_dim);
  void validate() const;
};

[[nodiscard]] double q_eval(const QFunction& q, const Eigen::Ref<const Eigen::VectorXd>& x);
[[nodiscard]] double q_eval(const QFunction& q,
                            const Eigen::Ref<const Eigen::VectorXd>& s,
                            const Eigen::Ref<const Eigen::VectorXd>& a);

[[nodiscard]] Eigen::VectorXd join_sa(const Eigen::Ref<const Eigen::VectorXd>& s,
                                      const Eigen::Ref<const Eigen::VectorXd>& a);

// ||Q||_H^2 = w' K w, clamped at 0 against roundoff.
[[nodiscard]] double hilbert_norm_sq(const QFunction& q);
[[nodiscard]] double hilbert_norm(const QFunction& q);

// ||Q1 - Q2||_H via the three-term Gram form. Requires identical bandwidths.
[[nodiscard]] double hilbert_dist(const QFunction& a, const QFunction& b);

// Returns a new function with existing weights scaled by scale_existing and
// the given (atom, weight) pairs appended in order.
[[nodiscard]] QFunction append_atoms(
    const QFunction& q, double scale_existing,
    const std::vector<std::pair<Eigen::VectorXd, double>>& atoms);

// dQ/da at (s,a): termwise derivative of the kernel expansion,
//   sum_m w_m kappa(v_m,(s,a)) * (-(a_j - a_mj) / sigma_{action,j}^2).
// Empty Q returns the zero vector.
[[nodiscard]] Eigen::VectorXd action_gradient(const QFunction& q,
                                              const Eigen::Ref<const Eigen::VectorXd>& s,
                                              const Eigen::Ref<const Eigen::VectorXd>& a);

// Delimited-text serialization; round-trips doubles exactly (17 significant
// digits).
void save_qfunction(const QFunction& q, const std::filesystem::path& path);
[[nodiscard]] QFunction load_qfunction(const std::filesystem::path& path);
void write_qfunction(const QFunction& q, std::ostream& os);
[[nodiscard]] QFunction read_qfunction(std::istream& is);

}  // namespace kql
