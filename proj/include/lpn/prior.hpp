#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "lpn/icnn.hpp"

namespace lpn {

struct InversionResult {
  Eigen::VectorXd y_hat;
  double residual = 0.0;  // ||f(y_hat) - x||
  int iterations = 0;
  bool converged = false;
};

inline constexpr double kDefaultInversionTol = 1e-8;
inline constexpr int kDefaultInversionIters = 10000;

/// Solves f(y) = x by minimizing the strongly convex psi(y; alpha) - <x, y>,
/// whose gradient is exactly f(y) - x. Gradient descent with a
/// Barzilai-Borwein trial step and Armijo backtracking; stops when
/// ||f(y) - x|| <= tol. Starts from `start` when given, otherwise from x.
InversionResult invert_convex(const IcnnParams& params, const IcnnArch& arch, const Eigen::VectorXd& x,
                              double tol = kDefaultInversionTol, int max_iters = kDefaultInversionIters,
                              const std::optional<Eigen::VectorXd>& start = std::nullopt);

/// Solves f(y) = x by gradient descent on 0.5 ||f(y) - x||^2 using J r products
/// (J is symmetric). No global guarantee; the achieved residual is reported.
InversionResult invert_nonconvex(const IcnnParams& params, const IcnnArch& arch, const Eigen::VectorXd& x,
                                 double tol = kDefaultInversionTol, int max_iters = kDefaultInversionIters,
                                 const std::optional<Eigen::VectorXd>& start = std::nullopt);

struct PriorEval {
  double value = 0.0;
  InversionResult inversion;
  bool ok() const { return inversion.converged; }
};

/// R(f(y)) = <y, f(y)> - 0.5 ||f(y)||^2 - psi(y; alpha), exact for any y.
double prior_at_image(const IcnnParams& params, const IcnnArch& arch, const Eigen::VectorXd& y);

/// R(x) = <y_hat, x> - 0.5 ||x||^2 - psi(y_hat; alpha) with f(y_hat) = x. The
/// value is computed even when the inversion fails; check ok().
PriorEval eval_prior(const IcnnParams& params, const IcnnArch& arch, const Eigen::VectorXd& x,
                     double tol = kDefaultInversionTol, int max_iters = kDefaultInversionIters,
                     const std::optional<Eigen::VectorXd>& start = std::nullopt);

struct PriorCurve {
  std::vector<double> values;  // offset-normalized, min over converged points is 0
  std::vector<double> raw;
  std::vector<InversionResult> inversions;
  double offset = 0.0;  // subtracted from raw
  bool all_converged() const;
  std::size_t failures() const;
};

/// Evaluates R at every column of xs and subtracts the minimum over points
/// whose inversion converged.
PriorCurve eval_prior_curve(const IcnnParams& params, const IcnnArch& arch, const Eigen::MatrixXd& xs,
                            double tol = kDefaultInversionTol, int max_iters = kDefaultInversionIters);

}  // namespace lpn
