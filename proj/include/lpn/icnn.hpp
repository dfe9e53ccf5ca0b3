#pragma once

// Input-convex scalar network psi and its input gradient f = grad psi (the
// learned proximal network), with exact first- and second-order kernels.
//
// Layout (0-based layers k = 0..K-1, columns of Y are independent samples):
//   a_0 = H_0 y + b_0
//   a_k = W_k z_{k-1} + H_k y + b_k      k >= 1, W_k entrywise nonnegative
//   z_k = g(a_k),  g(x) = log(1 + exp(beta x)) / beta
//   psi(y) = w^T z_{K-1} + b + (alpha/2) ||y||^2,   w entrywise nonnegative
//   f(y) = sum_k H_k^T delta_k + alpha y
// where delta_{K-1} = w .* g'(a_{K-1}) and delta_{k-1} = (W_k^T delta_k) .* g'(a_{k-1}).

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lpn/losses.hpp"

namespace lpn {

struct IcnnArch {
  int input_dim = 1;
  std::vector<int> hidden_widths{1};
  double alpha = 0.0;  // strong-convexity weight
  double beta = 1.0;   // softplus sharpness

  int depth() const { return static_cast<int>(hidden_widths.size()); }

  /// alpha is accepted on [0, 1]; the closed endpoints give the analytic
  /// zero-network and identity-prox cases. Solvers flag alpha outside (0, 1).
  void validate() const {
    if (input_dim < 1) throw std::invalid_argument("IcnnArch: input_dim must be >= 1");
    if (hidden_widths.empty()) throw std::invalid_argument("IcnnArch: need at least one hidden layer");
    for (int m : hidden_widths)
      if (m < 1) throw std::invalid_argument("IcnnArch: hidden widths must be >= 1");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("IcnnArch: alpha must lie in [0, 1]");
    if (!(beta > 0.0)) throw std::invalid_argument("IcnnArch: beta must be positive");
  }

  std::size_t num_params() const {
    std::size_t count = 0;
    int prev = 0;
    for (int m : hidden_widths) {
      count += static_cast<std::size_t>(m) * (prev + input_dim + 1);
      prev = m;
    }
    return count + static_cast<std::size_t>(prev) + 1;
  }

  bool operator==(const IcnnArch&) const = default;
};

enum class InitScheme { gaussian, exp_gaussian };

/// Which potential psi() evaluates.
enum class Potential { strongly_convex, plain };

/// Every tensor of the network, shape-matched to an IcnnArch.
/// W[0] is an empty placeholder so that W[k] pairs with H[k] and bias[k].
template <typename Scalar>
struct IcnnTensors {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<Matrix> H;
  std::vector<Vector> bias;
  std::vector<Matrix> W;
  Vector w;
  Scalar b{0};

  void set_zero(const IcnnArch& arch) {
    const int K = arch.depth();
    H.assign(K, Matrix());
    bias.assign(K, Vector());
    W.assign(K, Matrix());
    for (int k = 0; k < K; ++k) {
      const int m = arch.hidden_widths[k];
      H[k] = Matrix::Zero(m, arch.input_dim);
      bias[k] = Vector::Zero(m);
      W[k] = k == 0 ? Matrix(0, 0) : Matrix::Zero(m, arch.hidden_widths[k - 1]);
    }
    w = Vector::Zero(arch.hidden_widths.back());
    b = Scalar(0);
  }

  bool matches(const IcnnArch& arch) const {
    const int K = arch.depth();
    if (static_cast<int>(H.size()) != K || static_cast<int>(bias.size()) != K ||
        static_cast<int>(W.size()) != K)
      return false;
    for (int k = 0; k < K; ++k) {
      const int m = arch.hidden_widths[k];
      if (H[k].rows() != m || H[k].cols() != arch.input_dim || bias[k].size() != m) return false;
      const int prev = k == 0 ? 0 : arch.hidden_widths[k - 1];
      if (W[k].rows() != (k == 0 ? 0 : m) || W[k].cols() != prev) return false;
    }
    return w.size() == arch.hidden_widths.back();
  }

  /// Visits every block in serialization order H_1, b_1, W_2, H_2, b_2, ..., w, b.
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn&& fn) {
    for (std::size_t k = 0; k < self.H.size(); ++k) {
      if (k > 0) fn(self.W[k]);
      fn(self.H[k]);
      fn(self.bias[k]);
    }
    fn(self.w);
    Eigen::Map<std::conditional_t<std::is_const_v<Self>, const Matrix, Matrix>> tail(&self.b, 1, 1);
    fn(tail);
  }
};

template <typename Scalar>
struct BasicIcnnParams : IcnnTensors<Scalar> {
  static BasicIcnnParams zeros(const IcnnArch& arch) {
    BasicIcnnParams p;
    p.set_zero(arch);
    return p;
  }
};

template <typename Scalar>
struct BasicParamGrad : IcnnTensors<Scalar> {
  static BasicParamGrad zeros(const IcnnArch& arch) {
    BasicParamGrad g;
    g.set_zero(arch);
    return g;
  }
};

using IcnnParams = BasicIcnnParams<double>;
using ParamGrad = BasicParamGrad<double>;

/// Training pairs stored column-wise: x is the clean signal, y the noisy one.
template <typename Scalar>
struct BasicBatch {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> x;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> y;
  Eigen::Index size() const { return x.cols(); }
};
using Batch = BasicBatch<double>;

/// Flattens in serialization order, each matrix row-major.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> flatten(const IcnnTensors<Scalar>& t) {
  std::size_t total = 0;
  IcnnTensors<Scalar>::visit(t, [&](const auto& block) { total += static_cast<std::size_t>(block.size()); });
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(static_cast<Eigen::Index>(total));
  Eigen::Index pos = 0;
  IcnnTensors<Scalar>::visit(t, [&](const auto& block) {
    for (Eigen::Index i = 0; i < block.rows(); ++i)
      for (Eigen::Index j = 0; j < block.cols(); ++j) out[pos++] = block(i, j);
  });
  return out;
}

template <typename Tensors, typename Derived>
Tensors unflatten(const IcnnArch& arch, const Eigen::MatrixBase<Derived>& flat) {
  Tensors t;
  t.set_zero(arch);
  if (static_cast<std::size_t>(flat.size()) != arch.num_params())
    throw std::invalid_argument("unflatten: parameter count mismatch");
  Eigen::Index pos = 0;
  Tensors::visit(t, [&](auto& block) {
    for (Eigen::Index i = 0; i < block.rows(); ++i)
      for (Eigen::Index j = 0; j < block.cols(); ++j) block(i, j) = flat[pos++];
  });
  return t;
}

/// Overwrites an already-shaped tensor set from a flat vector.
template <typename Tensors, typename Derived>
void assign_flat(Tensors& t, const Eigen::MatrixBase<Derived>& flat) {
  Eigen::Index pos = 0;
  Tensors::visit(t, [&](auto& block) {
    if (pos + block.size() > flat.size()) throw std::invalid_argument("assign_flat: parameter count mismatch");
    for (Eigen::Index i = 0; i < block.rows(); ++i)
      for (Eigen::Index j = 0; j < block.cols(); ++j) block(i, j) = flat[pos++];
  });
  if (pos != flat.size()) throw std::invalid_argument("assign_flat: parameter count mismatch");
}

/// Projects W_k and w onto the nonnegative orthant. Idempotent.
template <typename Scalar>
BasicIcnnParams<Scalar> clip_nonneg(BasicIcnnParams<Scalar> params) {
  for (std::size_t k = 1; k < params.W.size(); ++k) params.W[k] = params.W[k].cwiseMax(Scalar(0));
  params.w = params.w.cwiseMax(Scalar(0));
  return params;
}

template <typename Scalar>
Scalar min_constrained_entry(const BasicIcnnParams<Scalar>& params) {
  Scalar lo = params.w.size() ? params.w.minCoeff() : Scalar(0);
  for (std::size_t k = 1; k < params.W.size(); ++k)
    if (params.W[k].size()) lo = std::min(lo, params.W[k].minCoeff());
  return lo;
}

/// Deterministic given (arch, seed, scheme).
///
/// gaussian: every weight ~ N(0, 1/fan_in), biases ~ N(0, 1/input_dim); W_k and
/// w are then clipped to be nonnegative.
/// exp_gaussian: W_k and w entries are exp(xi / sqrt(fan_in)) / fan_in with
/// xi ~ N(0, 1), so they are strictly positive and each row sums to O(1);
/// H_k and biases follow the gaussian scheme.
inline IcnnParams init_params(const IcnnArch& arch, std::uint64_t seed, InitScheme scheme) {
  arch.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian_fill = [&](auto& block, double std_dev) {
    for (Eigen::Index i = 0; i < block.rows(); ++i)
      for (Eigen::Index j = 0; j < block.cols(); ++j) block(i, j) = std_dev * normal(rng);
  };
  auto positive_fill = [&](auto& block, double fan_in) {
    for (Eigen::Index i = 0; i < block.rows(); ++i)
      for (Eigen::Index j = 0; j < block.cols(); ++j)
        block(i, j) = std::exp(normal(rng) / std::sqrt(fan_in)) / fan_in;
  };

  IcnnParams p = IcnnParams::zeros(arch);
  const double n = arch.input_dim;
  for (int k = 0; k < arch.depth(); ++k) {
    if (k > 0) {
      const double fan_in = arch.hidden_widths[k - 1];
      if (scheme == InitScheme::exp_gaussian)
        positive_fill(p.W[k], fan_in);
      else
        gaussian_fill(p.W[k], 1.0 / std::sqrt(fan_in));
    }
    gaussian_fill(p.H[k], 1.0 / std::sqrt(n));
    gaussian_fill(p.bias[k], 1.0 / std::sqrt(n));
  }
  const double last = arch.hidden_widths.back();
  if (scheme == InitScheme::exp_gaussian)
    positive_fill(p.w, last);
  else
    gaussian_fill(p.w, 1.0 / std::sqrt(last));
  p.b = 0.0;
  return clip_nonneg(std::move(p));
}

namespace detail {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Softplus g(x) = log(1+exp(beta x))/beta with g' and g''. Uses a single
/// exp(-|beta x|) per entry so no term overflows; log(1 + e) with e in (0, 1]
/// is accurate in absolute terms, which is all the value of psi needs.
template <typename Scalar>
void softplus(const Mat<Scalar>& pre, Scalar beta, Mat<Scalar>* value, Mat<Scalar>* slope,
              Mat<Scalar>* curvature) {
  const auto t = (beta * pre.array()).eval();
  const auto e = (-t.abs()).exp().eval();
  const auto inv = (Scalar(1) + e).inverse().eval();
  if (value) *value = ((t.max(Scalar(0)) + (Scalar(1) + e).log()) / beta).matrix();
  // sigmoid(t): inv for t >= 0, 1 - inv otherwise.
  if (slope) *slope = (Scalar(0.5) + t.sign() * (inv - Scalar(0.5))).matrix();
  if (curvature) *curvature = (beta * e * inv.square()).matrix();
}

/// Forward activations plus the backward quantities needed for f and its
/// derivatives.
template <typename Scalar>
struct Trace {
  std::vector<Mat<Scalar>> z;          // g(a_k)
  std::vector<Mat<Scalar>> slope;      // g'(a_k)
  std::vector<Mat<Scalar>> curvature;  // g''(a_k)
  std::vector<Mat<Scalar>> delta;      // d psi / d a_k
  std::vector<Mat<Scalar>> carried;    // W_k^T delta_k, k >= 1
};

template <typename Scalar, typename Derived>
void check_input(const IcnnArch& arch, const Eigen::MatrixBase<Derived>& Y, const char* who) {
  if (Y.rows() != arch.input_dim)
    throw std::invalid_argument(std::string(who) + ": input dimension mismatch (expected " +
                                std::to_string(arch.input_dim) + ", got " + std::to_string(Y.rows()) + ")");
}

template <typename Scalar>
Trace<Scalar> forward(const BasicIcnnParams<Scalar>& p, const IcnnArch& arch, const Mat<Scalar>& Y,
                      bool want_value, bool want_curvature) {
  const int K = arch.depth();
  const Scalar beta = static_cast<Scalar>(arch.beta);
  Trace<Scalar> tr;
  tr.z.resize(K);
  tr.slope.resize(K);
  tr.curvature.resize(K);
  Mat<Scalar> pre;
  for (int k = 0; k < K; ++k) {
    pre.noalias() = p.H[k] * Y;
    if (k > 0) pre.noalias() += p.W[k] * tr.z[k - 1];
    pre.colwise() += p.bias[k];
    // z_{K-1} is only needed for the value of psi.
    const bool need_z = k + 1 < K || want_value;
    softplus<Scalar>(pre, beta, need_z ? &tr.z[k] : nullptr, &tr.slope[k],
                     want_curvature ? &tr.curvature[k] : nullptr);
  }
  return tr;
}

template <typename Scalar>
void backward(const BasicIcnnParams<Scalar>& p, Trace<Scalar>& tr) {
  const int K = static_cast<int>(tr.slope.size());
  tr.delta.assign(K, Mat<Scalar>());
  tr.carried.assign(K, Mat<Scalar>());
  tr.delta[K - 1] = tr.slope[K - 1].array().colwise() * p.w.array();
  for (int k = K - 1; k >= 1; --k) {
    tr.carried[k].noalias() = p.W[k].transpose() * tr.delta[k];
    tr.delta[k - 1] = tr.carried[k].cwiseProduct(tr.slope[k - 1]);
  }
}

template <typename Scalar>
Mat<Scalar> gradient_from_trace(const BasicIcnnParams<Scalar>& p, const IcnnArch& arch, const Trace<Scalar>& tr,
                                const Mat<Scalar>& Y) {
  Mat<Scalar> F = static_cast<Scalar>(arch.alpha) * Y;
  for (int k = 0; k < arch.depth(); ++k) F.noalias() += p.H[k].transpose() * tr.delta[k];
  return F;
}

}  // namespace detail

/// psi evaluated column-wise.
template <typename Scalar, typename Derived>
detail::Vec<Scalar> psi_batch(const BasicIcnnParams<Scalar>& params, const IcnnArch& arch,
                              const Eigen::MatrixBase<Derived>& Y, Potential potential = Potential::strongly_convex) {
  detail::check_input<Scalar>(arch, Y, "psi");
  const detail::Mat<Scalar> Ym = Y;
  const auto tr = detail::forward(params, arch, Ym, true, false);
  detail::Vec<Scalar> out = (tr.z.back().transpose() * params.w).array() + params.b;
  if (potential == Potential::strongly_convex)
    out += (static_cast<Scalar>(arch.alpha) / 2) * Ym.colwise().squaredNorm().transpose();
  return out;
}

/// psi(y; alpha) by default; Potential::plain drops the (alpha/2)||y||^2 term.
template <typename Scalar, typename Derived>
Scalar psi(const BasicIcnnParams<Scalar>& params, const IcnnArch& arch, const Eigen::MatrixBase<Derived>& y,
           Potential potential = Potential::strongly_convex) {
  if (y.cols() != 1) throw std::invalid_argument("psi: expected a single vector");
  return psi_batch(params, arch, y, potential)(0);
}

/// f(Y) = grad psi(Y) + alpha Y by an analytic backward pass, column-wise.
template <typename Scalar, typename Derived>
detail::Mat<Scalar> lpn_forward_batch(const BasicIcnnParams<Scalar>& params, const IcnnArch& arch,
                                      const Eigen::MatrixBase<Derived>& Y) {
  detail::check_input<Scalar>(arch, Y, "lpn_forward");
  const detail::Mat<Scalar> Ym = Y;
  auto tr = detail::forward(params, arch, Ym, false, false);
  detail::backward(params, tr);
  return detail::gradient_from_trace(params, arch, tr, Ym);
}

template <typename Scalar, typename Derived>
detail::Vec<Scalar> lpn_forward(const BasicIcnnParams<Scalar>& params, const IcnnArch& arch,
                                const Eigen::MatrixBase<Derived>& y) {
  if (y.cols() != 1) throw std::invalid_argument("lpn_forward: expected a single vector");
  return lpn_forward_batch(params, arch, y).col(0);
}

/// psi(y; alpha) and f(y) from a single pass.
template <typename Scalar, typename Derived>
std::pair<Scalar, detail::Vec<Scalar>> psi_and_lpn(const BasicIcnnParams<Scalar>& params, const IcnnArch& arch,
                                                   const Eigen::MatrixBase<Derived>& y) {
  if (y.cols() != 1) throw std::invalid_argument("psi_and_lpn: expected a single vector");
  detail::check_input<Scalar>(arch, y, "psi_and_lpn");
  const detail::Mat<Scalar> Y = y;
  auto tr = detail::forward(params, arch, Y, true, false);
  detail::backward(params, tr);
  const Scalar value = tr.z.back().col(0).dot(params.w) + params.b +
                       static_cast<Scalar>(arch.alpha) / 2 * Y.squaredNorm();
  return {value, detail::gradient_from_trace(params, arch, tr, Y).col(0)};
}

/// Column-wise Jacobian-vector products J_f(Y_i) V_i by forward-mode
/// differentiation of the backward pass.
template <typename Scalar, typename DerivedY, typename DerivedV>
detail::Mat<Scalar> directional_derivative_batch(const BasicIcnnParams<Scalar>& params, const IcnnArch& arch,
                                                 const Eigen::MatrixBase<DerivedY>& Y,
                                                 const Eigen::MatrixBase<DerivedV>& V) {
  using detail::Mat;
  detail::check_input<Scalar>(arch, Y, "directional_derivative");
  if (V.rows() != Y.rows() || V.cols() != Y.cols())
    throw std::invalid_argument("directional_derivative: direction shape mismatch");
  const Mat<Scalar> Ym = Y;
  const Mat<Scalar> Vm = V;
  auto tr = detail::forward(params, arch, Ym, false, true);
  detail::backward(params, tr);

  const int K = arch.depth();
  std::vector<Mat<Scalar>> slope_dot(K);
  Mat<Scalar> z_dot, pre_dot;
  for (int k = 0; k < K; ++k) {
    pre_dot.noalias() = params.H[k] * Vm;
    if (k > 0) pre_dot.noalias() += params.W[k] * z_dot;
    slope_dot[k] = tr.curvature[k].cwiseProduct(pre_dot);
    z_dot = tr.slope[k].cwiseProduct(pre_dot);
  }
  Mat<Scalar> out = static_cast<Scalar>(arch.alpha) * Vm;
  Mat<Scalar> delta_dot = slope_dot[K - 1].array().colwise() * params.w.array();
  for (int k = K - 1; k >= 0; --k) {
    out.noalias() += params.H[k].transpose() * delta_dot;
    if (k == 0) break;
    Mat<Scalar> next = (params.W[k].transpose() * delta_dot).cwiseProduct(tr.slope[k - 1]);
    next += tr.carried[k].cwiseProduct(slope_dot[k - 1]);
    delta_dot = std::move(next);
  }
  return out;
}

template <typename Scalar, typename DerivedY, typename DerivedV>
detail::Vec<Scalar> directional_derivative(const BasicIcnnParams<Scalar>& params, const IcnnArch& arch,
                                           const Eigen::MatrixBase<DerivedY>& y,
                                           const Eigen::MatrixBase<DerivedV>& v) {
  if (y.cols() != 1 || v.cols() != 1) throw std::invalid_argument("directional_derivative: expected vectors");
  return directional_derivative_batch(params, arch, y, v).col(0);
}

/// Dense Jacobian of f at y, one basis direction per column.
template <typename Scalar, typename Derived>
detail::Mat<Scalar> lpn_jacobian(const BasicIcnnParams<Scalar>& params, const IcnnArch& arch,
                                 const Eigen::MatrixBase<Derived>& y) {
  if (y.cols() != 1) throw std::invalid_argument("lpn_jacobian: expected a single vector");
  detail::check_input<Scalar>(arch, y, "lpn_jacobian");
  const Eigen::Index n = y.rows();
  const detail::Mat<Scalar> Y = y.replicate(1, n);
  return directional_derivative_batch(params, arch, Y, detail::Mat<Scalar>::Identity(n, n));
}

template <typename Scalar>
struct BasicLossGrad {
  Scalar loss{0};
  BasicParamGrad<Scalar> grad;
};
using LossGrad = BasicLossGrad<double>;

/// Per-column loss values and dL/dF for a residual block R = F - X.
template <typename Scalar>
std::pair<detail::Vec<Scalar>, detail::Mat<Scalar>> loss_terms(const detail::Mat<Scalar>& R, const LossKind& kind) {
  using detail::Mat;
  using detail::Vec;
  Vec<Scalar> values(R.cols());
  Mat<Scalar> dF;
  switch (kind.type) {
    case LossType::l2:
      values = Scalar(0.5) * R.colwise().squaredNorm().transpose();
      dF = R;
      break;
    case LossType::l1:
      values = R.cwiseAbs().colwise().sum().transpose();
      dF = R.array().sign().matrix();
      break;
    case LossType::proximal_matching: {
      if (!(kind.gamma > 0.0)) throw std::invalid_argument("proximal matching: gamma must be positive");
      const Scalar g2 = static_cast<Scalar>(kind.gamma * kind.gamma);
      const Scalar scale = kind.form == PmForm::normalized
                               ? static_cast<Scalar>(pm_normalizer(kind.gamma, static_cast<int>(R.rows())))
                               : Scalar(1);
      const Vec<Scalar> e = (-R.colwise().squaredNorm().transpose().array() / g2).exp().matrix();
      values = (Scalar(1) - scale * e.array()).matrix();
      dF = R * ((Scalar(2) * scale / g2) * e).asDiagonal();
      break;
    }
  }
  return {values, dF};
}

namespace detail {

/// Adds the gradient of sum_i loss_i * scale over the columns of (X, Y) into g
/// and returns sum_i loss_i.
template <typename Scalar>
Scalar accumulate_loss_grad(const BasicIcnnParams<Scalar>& params, const IcnnArch& arch, const Mat<Scalar>& X,
                            const Mat<Scalar>& Y, const LossKind& kind, Scalar scale, BasicParamGrad<Scalar>& g) {
  const int K = arch.depth();
  auto tr = forward(params, arch, Y, false, true);
  backward(params, tr);
  const Mat<Scalar> F = gradient_from_trace(params, arch, tr, Y);
  auto [values, E] = loss_terms<Scalar>(F - X, kind);
  E *= scale;

  // Adjoints of delta_k, seeded from the output f = sum H_k^T delta_k.
  std::vector<Mat<Scalar>> delta_bar(K);
  std::vector<Mat<Scalar>> slope_bar(K);
  for (int k = 0; k < K; ++k) {
    g.H[k].noalias() += tr.delta[k] * E.transpose();
    delta_bar[k].noalias() = params.H[k] * E;
  }
  // Reverse of delta_{k-1} = (W_k^T delta_k) .* g'(a_{k-1}), ascending in k.
  for (int k = 1; k < K; ++k) {
    slope_bar[k - 1] = delta_bar[k - 1].cwiseProduct(tr.carried[k]);
    const Mat<Scalar> t = delta_bar[k - 1].cwiseProduct(tr.slope[k - 1]);
    g.W[k].noalias() += tr.delta[k] * t.transpose();
    delta_bar[k].noalias() += params.W[k] * t;
  }
  // Reverse of delta_{K-1} = w .* g'(a_{K-1}).
  g.w += delta_bar[K - 1].cwiseProduct(tr.slope[K - 1]).rowwise().sum();
  slope_bar[K - 1] = delta_bar[K - 1].array().colwise() * params.w.array();

  // Reverse of the forward recursion, descending in k.
  Mat<Scalar> pre_bar, z_bar;
  for (int k = K - 1; k >= 0; --k) {
    pre_bar = slope_bar[k].cwiseProduct(tr.curvature[k]);
    if (k + 1 < K) pre_bar += z_bar.cwiseProduct(tr.slope[k]);
    g.H[k].noalias() += pre_bar * Y.transpose();
    g.bias[k] += pre_bar.rowwise().sum();
    if (k > 0) {
      g.W[k].noalias() += pre_bar * tr.z[k - 1].transpose();
      z_bar.noalias() = params.W[k].transpose() * pre_bar;
    }
  }
  return values.sum();
}

// Columns per pass; keeps the per-layer activations cache resident.
inline constexpr Eigen::Index kGradChunk = 256;

}  // namespace detail

/// Mean denoising loss of f(batch.y) against batch.x and its exact gradient
/// with respect to every network parameter (backward pass over the backward
/// pass that defines f). The final bias b never reaches f, so its gradient is 0.
template <typename Scalar>
BasicLossGrad<Scalar> param_grad_through_lpn(const BasicIcnnParams<Scalar>& params, const IcnnArch& arch,
                                             const BasicBatch<Scalar>& batch, const LossKind& kind) {
  if (batch.size() == 0) throw std::invalid_argument("param_grad_through_lpn: empty batch");
  detail::check_input<Scalar>(arch, batch.y, "param_grad_through_lpn");
  if (batch.x.rows() != batch.y.rows() || batch.x.cols() != batch.y.cols())
    throw std::invalid_argument("param_grad_through_lpn: x/y shape mismatch");

  const Scalar inv_b = Scalar(1) / static_cast<Scalar>(batch.size());
  BasicLossGrad<Scalar> out;
  out.grad = BasicParamGrad<Scalar>::zeros(arch);
  Scalar total{0};
  for (Eigen::Index start = 0; start < batch.size(); start += detail::kGradChunk) {
    const Eigen::Index len = std::min(detail::kGradChunk, batch.size() - start);
    total += detail::accumulate_loss_grad<Scalar>(params, arch, batch.x.middleCols(start, len),
                                                  batch.y.middleCols(start, len), kind, inv_b, out.grad);
  }
  out.loss = total * inv_b;
  return out;
}

/// Mean loss only (no gradient); used by finite-difference checks and logging.
template <typename Scalar>
Scalar batch_loss(const BasicIcnnParams<Scalar>& params, const IcnnArch& arch, const BasicBatch<Scalar>& batch,
                  const LossKind& kind) {
  if (batch.size() == 0) throw std::invalid_argument("batch_loss: empty batch");
  const detail::Mat<Scalar> F = lpn_forward_batch(params, arch, batch.y);
  return loss_terms<Scalar>(F - batch.x, kind).first.mean();
}

}  // namespace lpn
