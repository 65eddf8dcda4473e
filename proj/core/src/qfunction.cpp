#include "kql/qfunction.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace kql {

QFunction QFunction::zero(KernelConfig kernel, int state_dim, int action_dim) {
  kernel.validate();
  if (state_dim <= 0 || action_dim <= 0)
    throw std::invalid_argument("QFunction: state_dim and action_dim must be positive");
  if (kernel.dim() != state_dim + action_dim)
    throw std::invalid_argument("QFunction: bandwidths must cover state and action dims");
  QFunction q;
  q.kernel = std::move(kernel);
  q.state_dim = state_dim;
  q.action_dim = action_dim;
  q.dict.resize(state_dim + action_dim, 0);
  q.weights.resize(0);
  return q;
}

void QFunction::validate() const {
  kernel.validate();
  if (state_dim <= 0 || action_dim <= 0)
    throw std::invalid_argument("QFunction: state_dim and action_dim must be positive");
  if (kernel.dim() != dim())
    throw std::invalid_argument("QFunction: kernel dim != state_dim + action_dim");
  if (dict.rows() != dim())
    throw std::invalid_argument("QFunction: dict row count != state_dim + action_dim");
  if (weights.size() != dict.cols())
    throw std::invalid_argument("QFunction: weights length != dictionary size");
  if (!dict.allFinite() || !weights.allFinite())
    throw std::invalid_argument("QFunction: non-finite atom or weight");
}

Eigen::VectorXd join_sa(const Eigen::Ref<const Eigen::VectorXd>& s,
                        const Eigen::Ref<const Eigen::VectorXd>& a) {
  Eigen::VectorXd x(s.size() + a.size());
  x.head(s.size()) = s;
  x.tail(a.size()) = a;
  return x;
}

double q_eval(const QFunction& q, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (q.empty()) return 0.0;
  return q.weights.dot(kernel_vec(q.kernel, q.dict, x));
}

double q_eval(const QFunction& q,
              const Eigen::Ref<const Eigen::VectorXd>& s,
              const Eigen::Ref<const Eigen::VectorXd>& a) {
  if (s.size() != q.state_dim || a.size() != q.action_dim)
    throw std::invalid_argument("q_eval: state/action dimension mismatch");
  return q_eval(q, join_sa(s, a));
}

double hilbert_norm_sq(const QFunction& q) {
  if (q.empty()) return 0.0;
  const Eigen::MatrixXd k = gram_matrix(q.kernel, q.dict);
  const double n2 = q.weights.dot(k * q.weights);
  return n2 > 0.0 ? n2 : 0.0;
}

double hilbert_norm(const QFunction& q) { return std::sqrt(hilbert_norm_sq(q)); }

double hilbert_dist(const QFunction& a, const QFunction& b) {
  if (a.kernel.bandwidths.size() != b.kernel.bandwidths.size() ||
      a.kernel.bandwidths != b.kernel.bandwidths)
    throw std::invalid_argument("hilbert_dist: kernel bandwidth mismatch");
  const double n1 = hilbert_norm_sq(a);
  const double n2 = hilbert_norm_sq(b);
  double cross = 0.0;
  if (!a.empty() && !b.empty()) {
    const Eigen::MatrixXd c = cross_matrix(a.kernel, a.dict, b.dict);
    cross = a.weights.dot(c * b.weights);
  }
  const double d2 = n1 - 2.0 * cross + n2;
  return d2 > 0.0 ? std::sqrt(d2) : 0.0;
}

QFunction append_atoms(const QFunction& q, double scale_existing,
                       const std::vector<std::pair<Eigen::VectorXd, double>>& atoms) {
  if (!std::isfinite(scale_existing))
    throw std::invalid_argument("append_atoms: non-finite scale");
  QFunction out;
  out.kernel = q.kernel;
  out.state_dim = q.state_dim;
  out.action_dim = q.action_dim;
  const Eigen::Index m0 = q.dict.cols();
  out.dict.resize(q.dim(), m0 + static_cast<Eigen::Index>(atoms.size()));
  out.weights.resize(m0 + static_cast<Eigen::Index>(atoms.size()));
  out.dict.leftCols(m0) = q.dict;
  out.weights.head(m0) = scale_existing * q.weights;
  Eigen::Index j = m0;
  for (const auto& [v, w] : atoms) {
    if (v.size() != q.dim())
      throw std::invalid_argument("append_atoms: atom dimension mismatch");
    out.dict.col(j) = v;
    out.weights(j) = w;
    ++j;
  }
  return out;
}

Eigen::VectorXd action_gradient(const QFunction& q,
                                const Eigen::Ref<const Eigen::VectorXd>& s,
                                const Eigen::Ref<const Eigen::VectorXd>& a) {
  if (s.size() != q.state_dim || a.size() != q.action_dim)
    throw std::invalid_argument("action_gradient: state/action dimension mismatch");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(q.action_dim);
  if (q.empty()) return g;
  const Eigen::VectorXd kv = kernel_vec(q.kernel, q.dict, join_sa(s, a));
  const Eigen::VectorXd t = q.weights.cwiseProduct(kv);
  const double tsum = t.sum();
  for (int j = 0; j < q.action_dim; ++j) {
    const double sigma = q.kernel.bandwidths(q.state_dim + j);
    const double inner = a(j) * tsum - q.dict.row(q.state_dim + j).dot(t);
    g(j) = -inner / (sigma * sigma);
  }
  return g;
}

namespace {

void put_double(std::ostream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

}  // namespace

void write_qfunction(const QFunction& q, std::ostream& os) {
  q.validate();
  os << "kqlearn-qfunction 1\n";
  os << "state_dim " << q.state_dim << "\n";
  os << "action_dim " << q.action_dim << "\n";
  os << "jitter ";
  put_double(os, q.kernel.jitter);
  os << "\nbandwidths";
  for (Eigen::Index i = 0; i < q.kernel.bandwidths.size(); ++i) {
    os << ' ';
    put_double(os, q.kernel.bandwidths(i));
  }
  os << "\natoms " << q.order() << "\n";
  for (int m = 0; m < q.order(); ++m) {
    for (Eigen::Index i = 0; i < q.dict.rows(); ++i) {
      put_double(os, q.dict(i, m));
      os << ' ';
    }
    put_double(os, q.weights(m));
    os << '\n';
  }
}

QFunction read_qfunction(std::istream& is) {
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "kqlearn-qfunction" || version != 1)
    throw std::runtime_error("read_qfunction: unrecognized header");
  std::string key;
  int p = 0, q_dim = 0, m = 0;
  double jitter = 0.0;
  is >> key >> p;
  if (key != "state_dim") throw std::runtime_error("read_qfunction: expected state_dim");
  is >> key >> q_dim;
  if (key != "action_dim") throw std::runtime_error("read_qfunction: expected action_dim");
  is >> key >> jitter;
  if (key != "jitter") throw std::runtime_error("read_qfunction: expected jitter");
  is >> key;
  if (key != "bandwidths") throw std::runtime_error("read_qfunction: expected bandwidths");
  Eigen::VectorXd bw(p + q_dim);
  for (Eigen::Index i = 0; i < bw.size(); ++i) is >> bw(i);
  is >> key >> m;
  if (key != "atoms") throw std::runtime_error("read_qfunction: expected atoms");
  QFunction out;
  out.kernel.bandwidths = bw;
  out.kernel.jitter = jitter;
  out.state_dim = p;
  out.action_dim = q_dim;
  out.dict.resize(p + q_dim, m);
  out.weights.resize(m);
  for (int c = 0; c < m; ++c) {
    for (Eigen::Index i = 0; i < out.dict.rows(); ++i) is >> out.dict(i, c);
    is >> out.weights(c);
  }
  if (is.fail()) throw std::runtime_error("read_qfunction: truncated or malformed body");
  out.validate();
  return out;
}

void save_qfunction(const QFunction& q, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_qfunction: cannot open " + path.string());
  write_qfunction(q, os);
  if (!os) throw std::runtime_error("save_qfunction: write failed for " + path.string());
}

QFunction load_qfunction(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_qfunction: cannot open " + path.string());
  return read_qfunction(is);
}

}  // namespace kql
