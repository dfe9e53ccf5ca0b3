#include "lpn/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lpn {
namespace {

struct Probe {
  double value = 0.0;
  Eigen::VectorXd grad;
  double residual = 0.0;
};

/// Monotone gradient descent: Barzilai-Borwein trial step, Armijo
/// backtracking. Once objective differences drop to round-off level a step is
/// accepted if it lowers the residual instead.
template <typename Eval>
InversionResult descend(Eval&& eval, Eigen::VectorXd y, double tol, int max_iters) {
  if (!(tol > 0.0)) throw std::invalid_argument("inversion: tol must be positive");
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 60;

  Probe p = eval(y);
  InversionResult best{y, p.residual, 0, false};
  double step = 1.0;
  int it = 0;
  for (; it < max_iters; ++it) {
    if (p.residual <= tol) break;
    const double gnorm2 = p.grad.squaredNorm();
    if (!(gnorm2 > 0.0) || !std::isfinite(gnorm2)) break;

    double t = step;
    bool accepted = false;
    Eigen::VectorXd y_new;
    Probe q;
    for (int bt = 0; bt < kMaxBacktracks; ++bt, t *= 0.5) {
      y_new = y - t * p.grad;
      q = eval(y_new);
      if (!std::isfinite(q.value) || !std::isfinite(q.residual)) continue;
      const bool armijo = q.value <= p.value - kArmijo * t * gnorm2;
      const bool flat = std::abs(q.value - p.value) <= 1e-12 * (1.0 + std::abs(p.value));
      if (armijo || (flat && q.residual < p.residual)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    const Eigen::VectorXd s = y_new - y;
    const double sd = s.dot(q.grad - p.grad);
    step = sd > 0.0 ? s.squaredNorm() / sd : 2.0 * t;
    step = std::clamp(step, 1e-12, 1e12);
    y = std::move(y_new);
    p = std::move(q);
    if (p.residual < best.residual) best = {y, p.residual, it + 1, false};
  }
  best.iterations = it;
  best.converged = best.residual <= tol;
  return best;
}

void check_point(const IcnnArch& arch, const Eigen::VectorXd& x, const char* who) {
  if (x.size() != arch.input_dim) throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

}  // namespace

InversionResult invert_convex(const IcnnParams& params, const IcnnArch& arch, const Eigen::VectorXd& x, double tol,
                              int max_iters, const std::optional<Eigen::VectorXd>& start) {
  check_point(arch, x, "invert_convex");
  auto eval = [&](const Eigen::VectorXd& y) {
    auto [value, f] = psi_and_lpn(params, arch, y);
    Probe p;
    p.grad = f - x;
    p.value = value - x.dot(y);
    p.residual = p.grad.norm();
    return p;
  };
  return descend(eval, start.value_or(x), tol, max_iters);
}

InversionResult invert_nonconvex(const IcnnParams& params, const IcnnArch& arch, const Eigen::VectorXd& x,
                                 double tol, int max_iters, const std::optional<Eigen::VectorXd>& start) {
  check_point(arch, x, "invert_nonconvex");
  auto eval = [&](const Eigen::VectorXd& y) {
    const Eigen::VectorXd r = lpn_forward(params, arch, y) - x;
    Probe p;
    p.residual = r.norm();
    p.value = 0.5 * p.residual * p.residual;
    p.grad = directional_derivative(params, arch, y, r);
    return p;
  };
  return descend(eval, start.value_or(x), tol, max_iters);
}

double prior_at_image(const IcnnParams& params, const IcnnArch& arch, const Eigen::VectorXd& y) {
  check_point(arch, y, "prior_at_image");
  auto [value, f] = psi_and_lpn(params, arch, y);
  return y.dot(f) - 0.5 * f.squaredNorm() - value;
}

PriorEval eval_prior(const IcnnParams& params, const IcnnArch& arch, const Eigen::VectorXd& x, double tol,
                     int max_iters, const std::optional<Eigen::VectorXd>& start) {
  PriorEval out;
  out.inversion = invert_convex(params, arch, x, tol, max_iters, start);
  const Eigen::VectorXd& y = out.inversion.y_hat;
  out.value = y.dot(x) - 0.5 * x.squaredNorm() - psi(params, arch, y);
  return out;
}

bool PriorCurve::all_converged() const { return failures() == 0; }

std::size_t PriorCurve::failures() const {
  return static_cast<std::size_t>(
      std::count_if(inversions.begin(), inversions.end(), [](const InversionResult& r) { return !r.converged; }));
}

PriorCurve eval_prior_curve(const IcnnParams& params, const IcnnArch& arch, const Eigen::MatrixXd& xs, double tol,
                            int max_iters) {
  if (xs.cols() == 0) throw std::invalid_argument("eval_prior_curve: no points");
  PriorCurve curve;
  double lo = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < xs.cols(); ++j) {
    PriorEval e = eval_prior(params, arch, xs.col(j), tol, max_iters);
    curve.raw.push_back(e.value);
    if (e.ok()) lo = std::min(lo, e.value);
    curve.inversions.push_back(std::move(e.inversion));
  }
  curve.offset = std::isfinite(lo) ? lo : 0.0;
  for (double r : curve.raw) curve.values.push_back(r - curve.offset);
  return curve;
}

}  // namespace lpn
