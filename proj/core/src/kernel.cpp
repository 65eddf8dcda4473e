#include "kql/kernel.hpp"

#include <cmath>
#include <limits>

namespace kql {

void KernelConfig::validate() const {
  if (bandwidths.size() == 0)
    throw std::invalid_argument("KernelConfig: bandwidths must be non-empty");
  if (!(bandwidths.array() > 0.0).all() || !bandwidths.allFinite())
    throw std::invalid_argument("KernelConfig: bandwidths must be finite and > 0");
  if (!(jitter >= 0.0) || jitter > 1e-4)
    throw std::invalid_argument("KernelConfig: jitter must be in [0, 1e-4]");
}

namespace {

void check_dim(const KernelConfig& cfg, Eigen::Index rows, const char* who) {
  if (rows != cfg.dim())
    throw std::invalid_argument(std::string(who) + ": dimension mismatch with bandwidths");
}

}  // namespace

double kernel_eval(const KernelConfig& cfg,
                   const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& y) {
  check_dim(cfg, x.size(), "kernel_eval");
  check_dim(cfg, y.size(), "kernel_eval");
  // (x-y) and (y-x) square to bitwise-equal terms, so symmetry is exact.
  const double s = ((x - y).cwiseQuotient(cfg.bandwidths)).squaredNorm();
  return std::exp(-0.5 * s);
}

Eigen::VectorXd kernel_vec(const KernelConfig& cfg,
                           const Eigen::Ref<const Eigen::MatrixXd>& dict,
                           const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (dict.cols() == 0) return Eigen::VectorXd();
  check_dim(cfg, dict.rows(), "kernel_vec");
  check_dim(cfg, x.size(), "kernel_vec");
  const Eigen::ArrayXd inv_bw = cfg.bandwidths.array().inverse();
  Eigen::ArrayXXd d = (dict.colwise() - x).array().colwise() * inv_bw;
  return (-0.5 * d.square().colwise().sum()).exp().transpose();
}

Eigen::MatrixXd gram_matrix(const KernelConfig& cfg,
                            const Eigen::Ref<const Eigen::MatrixXd>& points) {
  const Eigen::Index m = points.cols();
  if (m == 0) return Eigen::MatrixXd(0, 0);
  check_dim(cfg, points.rows(), "gram_matrix");
  Eigen::MatrixXd g(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    g(j, j) = 1.0;
    for (Eigen::Index i = 0; i < j; ++i) {
      const double v = kernel_eval(cfg, points.col(i), points.col(j));
      g(i, j) = v;
      g(j, i) = v;  // mirrored, so symmetry holds bitwise
    }
  }
  return g;
}

Eigen::MatrixXd cross_matrix(const KernelConfig& cfg,
                             const Eigen::Ref<const Eigen::MatrixXd>& a,
                             const Eigen::Ref<const Eigen::MatrixXd>& b) {
  if (a.cols() == 0 || b.cols() == 0) return Eigen::MatrixXd(a.cols(), b.cols());
  check_dim(cfg, a.rows(), "cross_matrix");
  check_dim(cfg, b.rows(), "cross_matrix");
  Eigen::MatrixXd c(a.cols(), b.cols());
  for (Eigen::Index j = 0; j < b.cols(); ++j)
    c.col(j) = kernel_vec(cfg, a, b.col(j));
  return c;
}

Eigen::MatrixXd solve_gram(const KernelConfig& cfg,
                           const Eigen::Ref<const Eigen::MatrixXd>& points,
                           const Eigen::Ref<const Eigen::MatrixXd>& rhs) {
  const Eigen::Index m = points.cols();
  if (rhs.rows() != m)
    throw std::invalid_argument("solve_gram: rhs rows must equal number of atoms");
  if (m == 0) return Eigen::MatrixXd(0, rhs.cols());

  Eigen::MatrixXd a = gram_matrix(cfg, points);
  a.diagonal().array() += cfg.jitter;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  Eigen::MatrixXd x = ldlt.solve(rhs);

  const double resid = (a * x - rhs).norm();
  const double tol = 1e-8 * (1.0 + rhs.norm());
  if (!(resid <= tol)) {  // negated compare also catches NaN/Inf solutions
    const double rc = ldlt.rcond();
    const double cond = (rc > 0.0) ? 1.0 / rc : std::numeric_limits<double>::infinity();
    throw SolveFailure("solve_gram: numerically singular Gram system (residual " +
                           std::to_string(resid) + ")",
                       cond);
  }
  return x;
}

}  // namespace kql
