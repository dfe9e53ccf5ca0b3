#include <gtest/gtest.h>

#include "lpn/checkpoint.hpp"
#include "lpn/prior.hpp"
#include "lpn/training.hpp"
#include "test_util.hpp"

namespace lpn {
namespace {

using testing::random_params;
using testing::random_vector;

/// Small 1-D model trained briefly on Laplace(0, 1); shared by the tests
/// that need a "trained" network rather than a random one.
const Checkpoint& trained_1d() {
  static const Checkpoint model = [] {
    const IcnnArch arch{1, {16, 16}, 0.05, 10.0};
    TrainConfig c;
    c.batch_size = 128;
    c.pretrain = {{400, 1e-2}};
    c.schedule = GammaSchedule{{{200, 0.5, 1e-3}}};
    c.seed = 1;
    return Checkpoint{arch, train(arch, c, DataSource::laplacian(0.0, 1.0)).params, 1};
  }();
  return model;
}

/// R(x) = psi*(x) - x^2/2 with the conjugate found by a grid scan and golden
/// section on the concave objective x y - psi(y); independent of the solvers.
double conjugate_oracle_r(const IcnnParams& p, const IcnnArch& arch, double x) {
  const auto objective = [&](double y) { return x * y - psi(p, arch, Eigen::VectorXd::Constant(1, y)); };
  double best_y = 0.0, best = -INFINITY;
  const double span = 2.0 * (std::abs(x) + 1.0) / arch.alpha;
  for (int i = 0; i <= 20000; ++i) {
    const double y = -span + 2.0 * span * i / 20000.0;
    const double v = objective(y);
    if (v > best) {
      best = v;
      best_y = y;
    }
  }
  double a = best_y - 2.0 * span / 20000.0, b = best_y + 2.0 * span / 20000.0;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200 && b - a > 1e-13; ++it) {
    const double c = b - phi * (b - a), d = a + phi * (b - a);
    if (objective(c) > objective(d))
      b = d;
    else
      a = c;
  }
  return objective(0.5 * (a + b)) - 0.5 * x * x;
}

TEST(Prior, ZeroNetworkHalfAlphaGivesHalfSquaredNorm) {
  const IcnnArch arch{3, {2}, 0.5, 1.0};
  const IcnnParams p = IcnnParams::zeros(arch);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd x = random_vector(rng, 3, 2.0);
    const PriorEval e = eval_prior(p, arch, x);
    ASSERT_TRUE(e.ok());
    EXPECT_NEAR(e.value, 0.5 * x.squaredNorm(), 1e-8);
  }
}

TEST(Prior, IdentityProxHasZeroRegularizer) {
  const IcnnArch arch{2, {3}, 1.0, 1.0};
  const IcnnParams p = IcnnParams::zeros(arch);
  std::mt19937_64 rng(2);
  Eigen::MatrixXd xs(2, 20);
  for (int i = 0; i < 20; ++i) {
    xs.col(i) = random_vector(rng, 2, 3.0);
    const PriorEval e = eval_prior(p, arch, xs.col(i));
    EXPECT_NEAR(e.value, 0.0, 1e-8);
  }
  const PriorCurve c = eval_prior_curve(p, arch, xs);
  for (double v : c.values) EXPECT_NEAR(v, 0.0, 1e-8);
}

TEST(Prior, InvertZeroNetwork) {
  const IcnnArch arch{1, {1}, 0.5, 1.0};
  const InversionResult r = invert_convex(IcnnParams::zeros(arch), arch, Eigen::VectorXd::Constant(1, 1.0));
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.y_hat[0], 2.0, 1e-8);

  const IcnnArch id{4, {2}, 1.0, 1.0};
  const Eigen::Vector4d x(1, -2, 3, 0.5);
  const InversionResult n = invert_nonconvex(IcnnParams::zeros(id), id, x);
  EXPECT_TRUE(n.converged);
  EXPECT_LE((n.y_hat - x).norm(), 1e-12);
  EXPECT_LE(n.residual, 1e-12);
}

TEST(Prior, RoundTripWithinStrongMonotonicityBound) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 8;
    const IcnnArch arch = testing::random_arch(rng, n);
    const IcnnParams p = random_params(arch, trial);
    const Eigen::VectorXd y0 = random_vector(rng, n, 2.0);
    const Eigen::VectorXd x = lpn_forward(p, arch, y0);
    const double tol = 1e-9;
    const InversionResult r = invert_convex(p, arch, x, tol);
    ASSERT_TRUE(r.converged);
    EXPECT_LE(r.residual, tol);
    EXPECT_LE((lpn_forward(p, arch, r.y_hat) - x).norm(), tol);
    EXPECT_LE((r.y_hat - y0).norm(), 10 * tol / arch.alpha);
  }
}

TEST(Prior, MatchesConjugateOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const IcnnArch arch = testing::random_arch(rng, 1);
    const IcnnParams p = random_params(arch, 40 + trial);
    for (double x : {-2.0, -0.3, 0.0, 0.8, 1.7}) {
      const PriorEval e = eval_prior(p, arch, Eigen::VectorXd::Constant(1, x), 1e-11);
      ASSERT_TRUE(e.ok());
      EXPECT_NEAR(e.value, conjugate_oracle_r(p, arch, x), 1e-8) << "trial " << trial << " x=" << x;
    }
  }
}

TEST(Prior, ValueAtImageMatchesInversion) {
  std::mt19937_64 rng(5);
  const IcnnArch arch{5, {8, 8}, 0.2, 2.0};
  const IcnnParams p = random_params(arch, 6);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd y = random_vector(rng, 5);
    const PriorEval e = eval_prior(p, arch, lpn_forward(p, arch, y), 1e-11);
    ASSERT_TRUE(e.ok());
    EXPECT_NEAR(e.value, prior_at_image(p, arch, y), 1e-8);
  }
}

TEST(Prior, ProxInequality) {
  std::mt19937_64 rng(6);
  const IcnnArch arch{3, {10, 10}, 0.1, 3.0};
  const IcnnParams p = random_params(arch, 7);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd y = random_vector(rng, 3, 1.5);
    const Eigen::VectorXd fy = lpn_forward(p, arch, y);
    const double lhs = 0.5 * (y - fy).squaredNorm() + prior_at_image(p, arch, y);
    for (int j = 0; j < 100; ++j) {
      const Eigen::VectorXd cand = fy + random_vector(rng, 3, j < 50 ? 0.05 : 1.0);
      const PriorEval e = eval_prior(p, arch, cand, 1e-10);
      ASSERT_TRUE(e.ok());
      EXPECT_LE(lhs, 0.5 * (y - cand).squaredNorm() + e.value + 1e-6);
    }
  }
}

TEST(Prior, CurveOffsetAndInvariance) {
  std::mt19937_64 rng(7);
  const IcnnArch arch{2, {6}, 0.3, 2.0};
  const IcnnParams p = random_params(arch, 8);
  const Eigen::MatrixXd xs = testing::random_matrix(rng, 2, 15);
  const PriorCurve c = eval_prior_curve(p, arch, xs);
  ASSERT_TRUE(c.all_converged());
  EXPECT_EQ(*std::min_element(c.values.begin(), c.values.end()), 0.0);
  for (std::size_t i = 0; i < c.values.size(); ++i) {
    EXPECT_DOUBLE_EQ(c.values[i], c.raw[i] - c.offset);
    EXPECT_NEAR(c.raw[i] - c.raw[0], c.values[i] - c.values[0], 1e-12);
  }
}

TEST(Prior, CoercivityAlongRays) {
  std::mt19937_64 rng(8);
  const IcnnArch arch{4, {8, 8}, 0.2, 2.0};
  const IcnnParams p = random_params(arch, 9);
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd d = random_vector(rng, 4).normalized();
    std::vector<double> r;
    for (double t : {1.0, 2.0, 4.0, 8.0}) r.push_back(eval_prior(p, arch, (t * d).eval()).value);
    EXPECT_LT(r[2], r[3]);
  }
}

TEST(Prior, NonConvergenceIsReported) {
  std::mt19937_64 rng(9);
  const IcnnArch arch{3, {8}, 0.1, 2.0};
  const IcnnParams p = random_params(arch, 10);
  const PriorEval e = eval_prior(p, arch, random_vector(rng, 3, 3.0), 1e-12, 1);
  EXPECT_FALSE(e.ok());
  EXPECT_TRUE(std::isfinite(e.value));
  EXPECT_GT(e.inversion.residual, 1e-12);
  EXPECT_EQ(e.inversion.iterations, 1);

  const PriorCurve c = eval_prior_curve(p, arch, testing::random_matrix(rng, 3, 4, 3.0), 1e-12, 1);
  EXPECT_EQ(c.failures(), 4u);
  EXPECT_FALSE(c.all_converged());
}

TEST(Prior, TrainedModelTightInversion) {
  const auto& m = trained_1d();
  const InversionResult r = invert_convex(m.params, m.arch, Eigen::VectorXd::Constant(1, 0.5), 1e-10);
  ASSERT_TRUE(r.converged);
  EXPECT_LE(std::abs(lpn_forward(m.params, m.arch, r.y_hat)[0] - 0.5), 1e-10);
}

TEST(Prior, ConvexAndNonconvexInversionsAgree) {
  const auto& m = trained_1d();
  for (double x : {-1.5, -0.2, 0.3, 1.1}) {
    const Eigen::VectorXd xv = Eigen::VectorXd::Constant(1, x);
    const InversionResult a = invert_convex(m.params, m.arch, xv, 1e-10);
    const InversionResult b = invert_nonconvex(m.params, m.arch, xv, 1e-10, 100000);
    ASSERT_TRUE(a.converged);
    if (b.converged) EXPECT_LE((a.y_hat - b.y_hat).norm(), 1e-6) << "x=" << x;
  }
}

TEST(Prior, FarPointReportsHonestly) {
  const auto& m = trained_1d();
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 100.0);
  const InversionResult r = invert_convex(m.params, m.arch, x, 1e-8, 200);
  const double true_residual = (lpn_forward(m.params, m.arch, r.y_hat) - x).norm();
  EXPECT_NEAR(r.residual, true_residual, 1e-12);
  EXPECT_EQ(r.converged, true_residual <= 1e-8);
}

}  // namespace
}  // namespace lpn
