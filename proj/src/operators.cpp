#include "lpn/operators.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace lpn {
namespace {

int reflect_index(int i, int n) {
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

template <typename... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <typename... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

/// Shared loop for blur and its adjoint: out[r,c] (or its scatter) over every tap.
template <typename Tap>
void for_each_tap(const BlurOp& blur, Tap&& tap) {
  const int kr = static_cast<int>(blur.kernel.rows());
  const int kc = static_cast<int>(blur.kernel.cols());
  const int cr = kr / 2;
  const int cc = kc / 2;
  for (int r = 0; r < blur.rows; ++r)
    for (int c = 0; c < blur.cols; ++c)
      for (int i = 0; i < kr; ++i)
        for (int j = 0; j < kc; ++j) {
          const int src = reflect_index(r + i - cr, blur.rows) * blur.cols + reflect_index(c + j - cc, blur.cols);
          tap(r * blur.cols + c, src, blur.kernel(i, j));
        }
}

void check_dim(Eigen::Index got, int expected, const char* who) {
  if (got != expected)
    throw std::invalid_argument(std::string(who) + ": dimension mismatch (expected " + std::to_string(expected) +
                                ", got " + std::to_string(got) + ")");
}

}  // namespace

LinearOperator LinearOperator::identity(int dim) {
  if (dim < 1) throw std::invalid_argument("identity: dim must be >= 1");
  return LinearOperator(IdentityOp{dim}, dim, dim);
}

LinearOperator LinearOperator::blur(Eigen::VectorXd kernel, int length) {
  Eigen::MatrixXd k = kernel.transpose();
  return blur_2d(std::move(k), 1, length);
}

LinearOperator LinearOperator::blur_2d(Eigen::MatrixXd kernel, int rows, int cols) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("blur: image dims must be >= 1");
  if (kernel.size() == 0 || kernel.rows() % 2 == 0 || kernel.cols() % 2 == 0)
    throw std::invalid_argument("blur: kernel dims must be odd");
  const int n = rows * cols;
  return LinearOperator(BlurOp{std::move(kernel), rows, cols}, n, n);
}

LinearOperator LinearOperator::gaussian_cs(int m, int n, std::uint64_t seed) {
  if (m < 1 || n < 1) throw std::invalid_argument("gaussian_cs: dims must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(m)));
  Eigen::MatrixXd a(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = normal(rng);
  return LinearOperator(GaussianCsOp{m, n, seed, std::move(a)}, n, m);
}

LinearOperator LinearOperator::mask(int dim, std::vector<int> indices) {
  if (dim < 1) throw std::invalid_argument("mask: dim must be >= 1");
  for (int i : indices)
    if (i < 0 || i >= dim) throw std::invalid_argument("mask: index out of range");
  const int m = static_cast<int>(indices.size());
  return LinearOperator(MaskOp{dim, std::move(indices)}, dim, m);
}

LinearOperator LinearOperator::dense(Eigen::MatrixXd matrix) {
  if (matrix.size() == 0) throw std::invalid_argument("dense: empty matrix");
  const int n = static_cast<int>(matrix.cols());
  const int m = static_cast<int>(matrix.rows());
  return LinearOperator(DenseOp{std::move(matrix)}, n, m);
}

Eigen::MatrixXd LinearOperator::to_dense() const {
  Eigen::MatrixXd out(output_dim_, input_dim_);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(input_dim_);
  for (int j = 0; j < input_dim_; ++j) {
    e[j] = 1.0;
    out.col(j) = apply(*this, e);
    e[j] = 0.0;
  }
  return out;
}

Eigen::VectorXd apply(const LinearOperator& op, const Eigen::VectorXd& x) {
  check_dim(x.size(), op.input_dim(), "apply");
  return std::visit(Overloaded{
                        [&](const IdentityOp&) -> Eigen::VectorXd { return x; },
                        [&](const BlurOp& blur) -> Eigen::VectorXd {
                          Eigen::VectorXd y = Eigen::VectorXd::Zero(op.output_dim());
                          for_each_tap(blur, [&](int out, int src, double k) { y[out] += k * x[src]; });
                          return y;
                        },
                        [&](const GaussianCsOp& cs) -> Eigen::VectorXd { return cs.matrix * x; },
                        [&](const MaskOp& mask) -> Eigen::VectorXd {
                          Eigen::VectorXd y(static_cast<Eigen::Index>(mask.indices.size()));
                          for (std::size_t i = 0; i < mask.indices.size(); ++i) y[i] = x[mask.indices[i]];
                          return y;
                        },
                        [&](const DenseOp& dense) -> Eigen::VectorXd { return dense.matrix * x; },
                    },
                    op.kind());
}

Eigen::VectorXd adjoint(const LinearOperator& op, const Eigen::VectorXd& y) {
  check_dim(y.size(), op.output_dim(), "adjoint");
  return std::visit(Overloaded{
                        [&](const IdentityOp&) -> Eigen::VectorXd { return y; },
                        [&](const BlurOp& blur) -> Eigen::VectorXd {
                          Eigen::VectorXd x = Eigen::VectorXd::Zero(op.input_dim());
                          for_each_tap(blur, [&](int out, int src, double k) { x[src] += k * y[out]; });
                          return x;
                        },
                        [&](const GaussianCsOp& cs) -> Eigen::VectorXd { return cs.matrix.transpose() * y; },
                        [&](const MaskOp& mask) -> Eigen::VectorXd {
                          Eigen::VectorXd x = Eigen::VectorXd::Zero(op.input_dim());
                          for (std::size_t i = 0; i < mask.indices.size(); ++i) x[mask.indices[i]] += y[i];
                          return x;
                        },
                        [&](const DenseOp& dense) -> Eigen::VectorXd { return dense.matrix.transpose() * y; },
                    },
                    op.kind());
}

OpNormEstimate op_norm_sq(const LinearOperator& op, int iters, std::uint64_t seed) {
  if (iters < 1) throw std::invalid_argument("op_norm_sq: iters must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(op.input_dim());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  v.normalize();

  OpNormEstimate est;
  for (int k = 0; k < iters; ++k) {
    const Eigen::VectorXd w = normal_apply(op, v);
    const double rayleigh = v.dot(w);
    est.trace.push_back(rayleigh);
    est.value = rayleigh;
    est.iterations = k + 1;
    const double norm = w.norm();
    if (norm == 0.0) {
      est.value = 0.0;
      break;
    }
    v = w / norm;
  }
  return est;
}

CgResult cg_solve(const SymmetricOperator& apply_m, const Eigen::VectorXd& b, double tol, int max_iters,
                  const Eigen::VectorXd* x0) {
  CgResult res;
  res.x = x0 ? *x0 : Eigen::VectorXd::Zero(b.size());
  if (res.x.size() != b.size()) throw std::invalid_argument("cg_solve: initial guess has wrong size");
  const double target = tol * b.norm();
  if (b.norm() == 0.0) {
    res.x.setZero();
    res.converged = true;
    return res;
  }

  // The recursive residual can drift from b - M x; restart from the true
  // residual a few times before giving up.
  for (int restart = 0; restart < 4 && res.iterations < max_iters; ++restart) {
    Eigen::VectorXd r = b - apply_m(res.x);
    double rr = r.squaredNorm();
    if (std::sqrt(rr) <= target) break;
    Eigen::VectorXd p = r;
    while (res.iterations < max_iters) {
      const Eigen::VectorXd mp = apply_m(p);
      const double pmp = p.dot(mp);
      if (!(pmp > 0.0)) break;
      const double step = rr / pmp;
      res.x += step * p;
      r -= step * mp;
      ++res.iterations;
      const double rr_new = r.squaredNorm();
      if (std::sqrt(rr_new) <= target) break;
      p = r + (rr_new / rr) * p;
      rr = rr_new;
    }
  }
  res.residual_norm = (b - apply_m(res.x)).norm();
  res.converged = res.residual_norm <= target;
  return res;
}

}  // namespace lpn
