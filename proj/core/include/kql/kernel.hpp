#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace kql {

// Thrown when a regularized Gram system is numerically singular even after
// jitter. Carries a condition estimate for diagnostics.
class SolveFailure : public std::runtime_error {
 public:
  SolveFailure(const std::string& what, double condition_estimate)
      : std::runtime_error(what), condition_estimate_(condition_estimate) {}
  [[nodiscard]] double condition_estimate() const noexcept { return condition_estimate_; }

 private:
  double condition_estimate_;
};

// Gaussian RBF with one bandwidth per input dimension:
//   kappa(x, y) = exp(-0.5 * sum_i ((x_i - y_i) / bandwidths[i])^2)
// Values lie in (0, 1], with 1 exactly iff x == y. Points are column vectors;
// dictionaries are (dim x M) matrices with one atom per column.
struct KernelConfig {
  Eigen::VectorXd bandwidths;
  double jitter = 1e-8;  // added to Gram diagonals in solve_gram

  [[nodiscard]] int dim() const noexcept { return static_cast<int>(bandwidths.size()); }
  void validate() const;  // throws std::invalid_argument
};

[[nodiscard]] double kernel_eval(const KernelConfig& cfg,
                                 const Eigen::Ref<const Eigen::VectorXd>& x,
                                 const Eigen::Ref<const Eigen::VectorXd>& y);

// kappa(dict.col(m), x) for all m, vectorized.
[[nodiscard]] Eigen::VectorXd kernel_vec(const KernelConfig& cfg,
                                         const Eigen::Ref<const Eigen::MatrixXd>& dict,
                                         const Eigen::Ref<const Eigen::VectorXd>& x);

// Symmetric M x M Gram matrix with exact unit diagonal.
[[nodiscard]] Eigen::MatrixXd gram_matrix(const KernelConfig& cfg,
                                          const Eigen::Ref<const Eigen::MatrixXd>& points);

// |A|-by-|B| cross-kernel matrix.
[[nodiscard]] Eigen::MatrixXd cross_matrix(const KernelConfig& cfg,
                                           const Eigen::Ref<const Eigen::MatrixXd>& a,
                                           const Eigen::Ref<const Eigen::MatrixXd>& b);

// Solves (gram_matrix(points) + jitter * I) x = rhs for each rhs column.
// Throws SolveFailure if the system is numerically singular (residual norm
// above 1e-8 * (1 + ||rhs||) after the solve).
[[nodiscard]] Eigen::MatrixXd solve_gram(const KernelConfig& cfg,
                                         const Eigen::Ref<const Eigen::MatrixXd>& points,
                                         const Eigen::Ref<const Eigen::MatrixXd>& rhs);

}  // namespace kql
