#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Core>

namespace lpn {

/// Which proximal-matching variant to use. The two differ by an affine map of
/// the exponential term and share the same minimizer for a fixed gamma.
enum class PmForm { unnormalized, normalized };

enum class LossType { l2, l1, proximal_matching };

/// Denoising loss selector for training and for the parameter-gradient kernel.
struct LossKind {
  LossType type = LossType::l2;
  double gamma = 1.0;  // only read for proximal_matching
  PmForm form = PmForm::unnormalized;

  static LossKind l2() { return {LossType::l2, 1.0, PmForm::unnormalized}; }
  static LossKind l1() { return {LossType::l1, 1.0, PmForm::unnormalized}; }
  static LossKind pm(double gamma, PmForm form = PmForm::unnormalized) {
    return {LossType::proximal_matching, gamma, form};
  }
};

/// Scale (pi*gamma^2)^(-dim/2) of the normalized proximal-matching loss,
/// evaluated in log space.
inline double pm_normalizer(double gamma, int dim) {
  return std::exp(-0.5 * dim * std::log(std::numbers::pi * gamma * gamma));
}

/// m_gamma(r). Unnormalized: 1 - exp(-r^2/gamma^2). Normalized: the same with
/// the exponential scaled by (pi*gamma^2)^(-dim/2).
inline double loss_pm(double residual_norm, double gamma, int dim, PmForm form) {
  if (!(gamma > 0.0)) throw std::invalid_argument("loss_pm: gamma must be positive");
  if (residual_norm < 0.0) throw std::invalid_argument("loss_pm: residual norm must be nonnegative");
  const double e = std::exp(-(residual_norm * residual_norm) / (gamma * gamma));
  if (form == PmForm::normalized) return 1.0 - pm_normalizer(gamma, dim) * e;
  return 1.0 - e;
}

/// 0.5 * ||f_out - x||^2
template <typename DerivedA, typename DerivedB>
double loss_l2(const Eigen::MatrixBase<DerivedA>& f_out, const Eigen::MatrixBase<DerivedB>& x) {
  if (f_out.size() != x.size()) throw std::invalid_argument("loss_l2: dimension mismatch");
  return 0.5 * (f_out - x).squaredNorm();
}

/// ||f_out - x||_1
template <typename DerivedA, typename DerivedB>
double loss_l1(const Eigen::MatrixBase<DerivedA>& f_out, const Eigen::MatrixBase<DerivedB>& x) {
  if (f_out.size() != x.size()) throw std::invalid_argument("loss_l1: dimension mismatch");
  return (f_out - x).template lpNorm<1>();
}

}  // namespace lpn
