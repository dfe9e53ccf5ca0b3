#include <gtest/gtest.h>

#include "lpn/operators.hpp"
#include "test_util.hpp"

namespace lpn {
namespace {

using testing::random_vector;

/// 1-D correlation with explicit symmetric padding, written independently of
/// the library's index arithmetic.
Eigen::VectorXd reference_blur_1d(const Eigen::VectorXd& k, const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  const int half = static_cast<int>(k.size()) / 2;
  std::vector<double> padded;
  // Mirror the signal as many times as needed on each side.
  std::vector<double> period;
  for (int i = 0; i < n; ++i) period.push_back(x[i]);
  for (int i = n - 1; i >= 0; --i) period.push_back(x[i]);
  const int reps = half / (2 * n) + 2;
  for (int r = 0; r < 2 * reps; ++r) padded.insert(padded.end(), period.begin(), period.end());
  const int origin = reps * 2 * n;  // index of x[0] in padded
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < k.size(); ++j) s += k[j] * padded[static_cast<std::size_t>(origin + i + j - half)];
    out[i] = s;
  }
  return out;
}

std::vector<LinearOperator> sample_operators() {
  std::mt19937_64 rng(1);
  Eigen::MatrixXd k2(3, 3);
  k2 << 1, 2, 1, 2, 4, 2, 1, 2, 1;
  k2 /= 16.0;
  return {LinearOperator::identity(12),
          LinearOperator::blur(Eigen::Vector3d(0.25, 0.5, 0.25), 12),
          LinearOperator::blur((Eigen::VectorXd(5) << 1, 4, 6, 4, 1).finished() / 16.0, 64),
          LinearOperator::blur_2d(k2, 4, 5),
          LinearOperator::gaussian_cs(8, 16, 3),
          LinearOperator::mask(10, {0, 3, 4, 9}),
          LinearOperator::dense(testing::random_matrix(rng, 5, 7))};
}

TEST(Operators, AdjointPairing) {
  std::mt19937_64 rng(1);
  for (const auto& op : sample_operators()) {
    for (int t = 0; t < 5; ++t) {
      const Eigen::VectorXd u = random_vector(rng, op.input_dim());
      const Eigen::VectorXd v = random_vector(rng, op.output_dim());
      const double lhs = apply(op, u).dot(v), rhs = u.dot(adjoint(op, v));
      EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));
    }
  }
}

TEST(Operators, Linearity) {
  std::mt19937_64 rng(2);
  for (const auto& op : sample_operators()) {
    const Eigen::VectorXd u = random_vector(rng, op.input_dim()), v = random_vector(rng, op.input_dim());
    const double a = 1.7, b = -0.3;
    EXPECT_LE((apply(op, (a * u + b * v).eval()) - (a * apply(op, u) + b * apply(op, v))).norm(), 1e-10);
  }
}

TEST(Operators, IdentityAndTrivialBlur) {
  std::mt19937_64 rng(3);
  const Eigen::VectorXd x = random_vector(rng, 9);
  EXPECT_EQ(apply(LinearOperator::identity(9), x), x);
  EXPECT_EQ(apply(LinearOperator::blur(Eigen::VectorXd::Ones(1), 9), x), x);
  EXPECT_EQ(adjoint(LinearOperator::blur(Eigen::VectorXd::Ones(1), 9), x), x);
}

TEST(Operators, BlurMatchesReflectPaddingReference) {
  std::mt19937_64 rng(4);
  for (int n : {1, 2, 3, 7, 20}) {
    for (int len : {3, 5, 9}) {
      const Eigen::VectorXd k = random_vector(rng, len);
      const Eigen::VectorXd x = random_vector(rng, n);
      EXPECT_LE((apply(LinearOperator::blur(k, n), x) - reference_blur_1d(k, x)).norm(), 1e-13)
          << "n=" << n << " taps=" << len;
    }
  }
  // Hand-worked: [1,2,3] on (1,2,3,4) with reflection (1 | 1 2 3 4 | 4).
  const Eigen::VectorXd y = apply(LinearOperator::blur(Eigen::Vector3d(1, 2, 3), 4), Eigen::Vector4d(1, 2, 3, 4));
  EXPECT_EQ(y, Eigen::Vector4d(1 + 2 + 6, 1 + 4 + 9, 2 + 6 + 12, 3 + 8 + 12));
}

TEST(Operators, Blur2dIsSeparableProduct) {
  std::mt19937_64 rng(5);
  const Eigen::Vector3d a(0.2, 0.5, 0.3), b(0.1, 0.6, 0.3);
  const Eigen::MatrixXd k = a * b.transpose();
  const int rows = 6, cols = 5;
  const Eigen::VectorXd x = random_vector(rng, rows * cols);
  const Eigen::VectorXd y = apply(LinearOperator::blur_2d(k, rows, cols), x);
  // Row pass then column pass with the 1-D reference.
  Eigen::MatrixXd img = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      x.data(), rows, cols);
  for (int r = 0; r < rows; ++r) img.row(r) = reference_blur_1d(b, img.row(r).transpose()).transpose();
  for (int c = 0; c < cols; ++c) img.col(c) = reference_blur_1d(a, img.col(c));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) EXPECT_NEAR(y[r * cols + c], img(r, c), 1e-13);
}

TEST(Operators, GaussianCsIsSeededWithScaledEntries) {
  const Eigen::MatrixXd a = LinearOperator::gaussian_cs(200, 300, 7).to_dense();
  EXPECT_EQ(a, LinearOperator::gaussian_cs(200, 300, 7).to_dense());
  EXPECT_NE(a, LinearOperator::gaussian_cs(200, 300, 8).to_dense());
  const double var = a.array().square().mean();
  EXPECT_NEAR(var, 1.0 / 200.0, 0.03 / 200.0);
  EXPECT_NEAR(a.mean(), 0.0, 3.0 / std::sqrt(200.0 * 300.0 * 200.0));
}

TEST(Operators, MaskAndValidation) {
  const LinearOperator m = LinearOperator::mask(5, {4, 1});
  EXPECT_EQ(apply(m, (Eigen::VectorXd(5) << 0, 1, 2, 3, 4).finished()), Eigen::Vector2d(4, 1));
  EXPECT_EQ(adjoint(m, Eigen::Vector2d(7, 8)), (Eigen::VectorXd(5) << 0, 8, 0, 0, 7).finished());
  EXPECT_THROW(LinearOperator::mask(5, {5}), std::invalid_argument);
  EXPECT_THROW(LinearOperator::blur(Eigen::Vector2d(1, 1), 4), std::invalid_argument);
  EXPECT_THROW(apply(m, Eigen::VectorXd::Zero(4)), std::invalid_argument);
  EXPECT_THROW(adjoint(m, Eigen::VectorXd::Zero(5)), std::invalid_argument);
}

TEST(Operators, NormOfIdentityAndDiagonal) {
  EXPECT_NEAR(op_norm_sq(LinearOperator::identity(16), 50).value, 1.0, 1e-10);
  const LinearOperator d = LinearOperator::dense(Eigen::Vector3d(1, 2, 3).asDiagonal());
  EXPECT_NEAR(op_norm_sq(d, 200).value, 9.0, 1e-8);
  EXPECT_EQ(op_norm_sq(LinearOperator::dense(Eigen::MatrixXd::Zero(3, 3)), 10).value, 0.0);
  EXPECT_THROW(op_norm_sq(d, 0), std::invalid_argument);
}

TEST(Operators, NormMatchesSvdAndIsMonotone) {
  for (const auto& op : sample_operators()) {
    const OpNormEstimate est = op_norm_sq(op, 200, 4);
    const double sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(op.to_dense()).singularValues()[0];
    // Power iteration approaches from below; clustered blur spectra converge slowly.
    EXPECT_LE(est.value, sigma * sigma * (1.0 + 1e-12));
    EXPECT_GE(est.value, 0.99 * sigma * sigma);
    EXPECT_GT(1.1 * est.value, sigma * sigma);
    for (std::size_t i = 1; i < est.trace.size(); ++i) EXPECT_GE(est.trace[i], est.trace[i - 1] - 1e-12);
  }
}

TEST(Operators, NormTightWithSpectralGap) {
  std::mt19937_64 rng(10);
  const Eigen::MatrixXd g = testing::random_matrix(rng, 6, 6);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(g);
  const Eigen::VectorXd s = svd.singularValues();
  ASSERT_LT(s[1] / s[0], 0.95);
  EXPECT_NEAR(op_norm_sq(LinearOperator::dense(g), 2000).value, s[0] * s[0], 1e-8 * s[0] * s[0]);
}

TEST(Operators, CgExamples) {
  std::mt19937_64 rng(6);
  const Eigen::VectorXd b = random_vector(rng, 6);
  const CgResult id = cg_solve([](const Eigen::VectorXd& v) -> Eigen::VectorXd { return v; }, b);
  EXPECT_TRUE(id.converged);
  EXPECT_EQ(id.iterations, 1);
  EXPECT_LE((id.x - b).norm(), 1e-15);

  const CgResult d = cg_solve([](const Eigen::VectorXd& v) -> Eigen::VectorXd { return Eigen::Vector2d(2, 4).cwiseProduct(v); },
                              Eigen::Vector2d(2, 4));
  EXPECT_TRUE(d.converged);
  EXPECT_LE((d.x - Eigen::Vector2d(1, 1)).norm(), 1e-12);

  const CgResult z = cg_solve([](const Eigen::VectorXd& v) -> Eigen::VectorXd { return v; }, Eigen::VectorXd::Zero(3));
  EXPECT_TRUE(z.converged);
  EXPECT_EQ(z.x.norm(), 0.0);
}

TEST(Operators, CgMatchesLuOracle) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 10; ++t) {
    const Eigen::MatrixXd g = testing::random_matrix(rng, 10, 10);
    const Eigen::MatrixXd m = g.transpose() * g + 0.1 * Eigen::MatrixXd::Identity(10, 10);
    const Eigen::VectorXd b = random_vector(rng, 10);
    const CgResult r = cg_solve([&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return m * v; }, b, 1e-13);
    const Eigen::VectorXd direct = m.partialPivLu().solve(b);
    EXPECT_TRUE(r.converged);
    EXPECT_LE((r.x - direct).norm() / direct.norm(), 1e-8);
  }
}

TEST(Operators, CgExactInFewSteps) {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd g = testing::random_matrix(rng, 4, 4);
  const Eigen::MatrixXd m = g.transpose() * g + Eigen::MatrixXd::Identity(4, 4);
  const Eigen::VectorXd b = random_vector(rng, 4);
  const CgResult r = cg_solve([&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return m * v; }, b, 1e-12);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 6);  // 4 in exact arithmetic, slack for one restart
}

TEST(Operators, CgReportsExhaustion) {
  std::mt19937_64 rng(9);
  const Eigen::MatrixXd g = testing::random_matrix(rng, 30, 30);
  const Eigen::MatrixXd m = g.transpose() * g + 1e-3 * Eigen::MatrixXd::Identity(30, 30);
  const CgResult r = cg_solve([&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return m * v; },
                              random_vector(rng, 30), 1e-14, 2);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 2);
  EXPECT_GT(r.residual_norm, 0.0);
}

}  // namespace
}  // namespace lpn
