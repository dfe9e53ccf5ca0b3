#pragma once

#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace lpn {

struct IdentityOp {
  int dim = 1;
};

/// Correlation with an odd-sized stencil over a rows x cols image flattened
/// row-major (rows = 1 for 1-D signals). Out-of-range taps reflect about the
/// edge with the edge sample repeated: (d c b a | a b c d | d c b a).
struct BlurOp {
  Eigen::MatrixXd kernel;
  int rows = 1;
  int cols = 1;
};

/// m x n matrix with i.i.d. N(0, 1/m) entries drawn from seed.
struct GaussianCsOp {
  int m = 1;
  int n = 1;
  std::uint64_t seed = 0;
  Eigen::MatrixXd matrix;
};

/// Keeps the listed coordinates, in order.
struct MaskOp {
  int dim = 1;
  std::vector<int> indices;
};

struct DenseOp {
  Eigen::MatrixXd matrix;
};

/// Immutable linear measurement map.
class LinearOperator {
 public:
  using Kind = std::variant<IdentityOp, BlurOp, GaussianCsOp, MaskOp, DenseOp>;

  static LinearOperator identity(int dim);
  static LinearOperator blur(Eigen::VectorXd kernel, int length);
  static LinearOperator blur_2d(Eigen::MatrixXd kernel, int rows, int cols);
  static LinearOperator gaussian_cs(int m, int n, std::uint64_t seed);
  static LinearOperator mask(int dim, std::vector<int> indices);
  static LinearOperator dense(Eigen::MatrixXd matrix);

  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  const Kind& kind() const { return kind_; }

  /// Explicit matrix, assembled column by column.
  Eigen::MatrixXd to_dense() const;

 private:
  LinearOperator(Kind kind, int input_dim, int output_dim)
      : kind_(std::move(kind)), input_dim_(input_dim), output_dim_(output_dim) {}
  Kind kind_;
  int input_dim_;
  int output_dim_;
};

Eigen::VectorXd apply(const LinearOperator& op, const Eigen::VectorXd& x);
Eigen::VectorXd adjoint(const LinearOperator& op, const Eigen::VectorXd& y);

/// A^T A x
inline Eigen::VectorXd normal_apply(const LinearOperator& op, const Eigen::VectorXd& x) {
  return adjoint(op, apply(op, x));
}

struct OpNormEstimate {
  double value = 0.0;  // estimate of ||A^T A||
  int iterations = 0;
  std::vector<double> trace;  // Rayleigh quotient after each iteration
};

/// Power iteration on A^T A from a seeded Gaussian start vector. The
/// Rayleigh quotients of successive iterates are non-decreasing for a PSD
/// operator. Returns 0 for the zero operator.
OpNormEstimate op_norm_sq(const LinearOperator& op, int iters, std::uint64_t seed = 0);

struct CgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double residual_norm = 0.0;
  bool converged = false;
};

using SymmetricOperator = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Conjugate gradient for M x = b with M symmetric positive definite.
/// Converged means ||M x - b|| <= tol ||b||.
CgResult cg_solve(const SymmetricOperator& apply_m, const Eigen::VectorXd& b, double tol = 1e-10,
                  int max_iters = 1000, const Eigen::VectorXd* x0 = nullptr);

}  // namespace lpn
