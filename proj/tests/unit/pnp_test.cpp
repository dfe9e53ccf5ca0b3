#include <gtest/gtest.h>

#include "lpn/pnp.hpp"
#include "lpn/prior.hpp"
#include "test_util.hpp"

namespace lpn {
namespace {

using testing::random_params;
using testing::random_vector;

// alpha = 1 with a zero network is the identity prox.
const IcnnArch kIdentityArch{6, {3}, 1.0, 1.0};

TEST(Pnp, AdmmIdentityDenoiserReturnsMeasurement) {
  std::mt19937_64 rng(1);
  const Eigen::VectorXd y = random_vector(rng, 6);
  const LinearOperator op = LinearOperator::identity(6);
  PnpConfig c;
  c.rho = 2.0;
  const PnpResult r = admm_solve(IcnnParams::zeros(kIdentityArch), kIdentityArch, op, y, c, Eigen::VectorXd::Zero(6));
  ASSERT_TRUE(r.state.converged);
  EXPECT_LE((r.x - y).norm(), 1e-7);

  // A converged state is a fixed point of one more sweep.
  const AdmmTriple again = admm_step(IcnnParams::zeros(kIdentityArch), kIdentityArch, op, y, r.state.step,
                                     {r.state.x, r.state.u, r.state.z});
  EXPECT_LE((again.x - r.state.x).norm(), 10 * c.fp_tol);
  EXPECT_LE(kkt_residuals(IcnnParams::zeros(kIdentityArch), kIdentityArch, op, y, r.state, r.state.step).max(),
            10 * c.fp_tol);
}

TEST(Pnp, KktResidualsLargeBeforeConvergence) {
  std::mt19937_64 rng(2);
  const Eigen::VectorXd y = random_vector(rng, 6, 2.0);
  PnpConfig c;
  c.rho = 2.0;
  c.max_iters = 1;
  const LinearOperator op = LinearOperator::identity(6);
  const PnpResult r = admm_solve(IcnnParams::zeros(kIdentityArch), kIdentityArch, op, y, c, Eigen::VectorXd::Zero(6));
  EXPECT_FALSE(r.state.converged);
  EXPECT_EQ(r.state.iterations, 1);
  EXPECT_GT(kkt_residuals(IcnnParams::zeros(kIdentityArch), kIdentityArch, op, y, r.state, 2.0).max(), 1e-3);
}

TEST(Pnp, PgdIdentityDenoiserIsGradientDescent) {
  std::mt19937_64 rng(3);
  const Eigen::VectorXd y = random_vector(rng, 6), x0 = random_vector(rng, 6);
  PnpConfig c;
  c.eta = 0.9;
  c.max_iters = 12;
  c.fp_tol = 0.0;
  c.record_iterates = true;
  const PnpResult r = pgd_solve(IcnnParams::zeros(kIdentityArch), kIdentityArch, LinearOperator::identity(6), y, c, x0);
  ASSERT_EQ(r.state.iterates.size(), 13u);
  Eigen::VectorXd x = x0;
  for (std::size_t k = 0; k < r.state.iterates.size(); ++k) {
    EXPECT_LE((r.state.iterates[k] - x).norm(), 1e-14);
    // Closed form of x_k = y + 0.1^k (x_0 - y).
    EXPECT_LE((r.state.iterates[k] - (y + std::pow(0.1, k) * (x0 - y))).norm(), 1e-13);
    x = x - 0.9 * (x - y);
  }
}

TEST(Pnp, QuadraticPriorMatchesClosedForm) {
  // Zero network with alpha: f(v) = alpha v, prior R(x) = (1/alpha - 1) |x|^2 / 2.
  // PGD minimizes h + R / eta, ADMM minimizes h + rho R.
  const IcnnArch arch{3, {2}, 0.5, 1.0};
  const IcnnParams p = IcnnParams::zeros(arch);
  const Eigen::Vector3d y(1.0, -2.0, 0.5);
  const double c = 1.0 / arch.alpha - 1.0;
  const LinearOperator op = LinearOperator::identity(3);

  PnpConfig pc;
  pc.eta = 0.5;
  pc.max_iters = 2000;
  const PnpResult pgd = pgd_solve(p, arch, op, y, pc, Eigen::VectorXd::Zero(3));
  ASSERT_TRUE(pgd.state.converged);
  EXPECT_LE((pgd.x - y / (1.0 + c / pc.eta)).norm(), 1e-7);

  PnpConfig ac;
  ac.rho = 2.0;
  ac.max_iters = 2000;
  const PnpResult admm = admm_solve(p, arch, op, y, ac, Eigen::VectorXd::Zero(3));
  ASSERT_TRUE(admm.state.converged);
  EXPECT_LE((admm.x - y / (1.0 + c * ac.rho)).norm(), 1e-7);
}

TEST(Pnp, AdmmAndPgdAgreeOnDenoising) {
  std::mt19937_64 rng(4);
  const IcnnArch arch{1, {8, 8}, 0.3, 2.0};
  const IcnnParams p = random_params(arch, 11);
  const LinearOperator op = LinearOperator::identity(1);
  for (double yv : {-1.2, 0.1, 0.9}) {
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, yv);
    PnpConfig pc;
    pc.eta = 0.5;
    pc.max_iters = 5000;
    PnpConfig ac;
    ac.rho = 1.0 / pc.eta;
    ac.max_iters = 5000;
    const PnpResult a = admm_solve(p, arch, op, y, ac, y);
    const PnpResult b = pgd_solve(p, arch, op, y, pc, y);
    ASSERT_TRUE(a.state.converged);
    ASSERT_TRUE(b.state.converged);
    EXPECT_LE((a.x - b.x).norm(), 1e-3) << "y=" << yv;
  }
}

TEST(Pnp, AdmmUnitPenaltyGivesDenoiserAndWarns) {
  std::mt19937_64 rng(5);
  const IcnnArch arch{4, {6}, 0.4, 2.0};
  const IcnnParams p = random_params(arch, 12);
  const Eigen::VectorXd y = random_vector(rng, 4);
  PnpConfig c;
  c.rho = 1.0;
  c.max_iters = 5000;
  const PnpResult r = admm_solve(p, arch, LinearOperator::identity(4), y, c, y);
  ASSERT_TRUE(r.state.converged);
  EXPECT_LE((r.x - lpn_forward(p, arch, y)).norm(), 1e-6);
  EXPECT_FALSE(r.state.warnings.empty());
}

TEST(Pnp, DefaultStepsFromOperatorNorm) {
  const IcnnArch arch{3, {2}, 0.5, 1.0};
  const LinearOperator op = LinearOperator::dense(Eigen::Vector3d(1, 2, 3).asDiagonal());
  PnpConfig c;
  c.max_iters = 1;
  const PnpResult a = admm_solve(IcnnParams::zeros(arch), arch, op, Eigen::Vector3d::Ones(), c, Eigen::Vector3d::Zero());
  EXPECT_NEAR(a.state.op_norm, 9.0, 1e-8);
  EXPECT_NEAR(a.state.step, 9.9, 1e-7);
  EXPECT_TRUE(a.state.warnings.empty());
  const PnpResult g = pgd_solve(IcnnParams::zeros(arch), arch, op, Eigen::Vector3d::Ones(), c, Eigen::Vector3d::Zero());
  EXPECT_NEAR(g.state.step, 0.1, 1e-9);
  EXPECT_TRUE(g.state.warnings.empty());

  c.eta = 0.5;
  EXPECT_FALSE(pgd_solve(IcnnParams::zeros(arch), arch, op, Eigen::Vector3d::Ones(), c, Eigen::Vector3d::Zero())
                   .state.warnings.empty());
}

TEST(Pnp, CgFailureRaises) {
  std::mt19937_64 rng(6);
  const IcnnArch arch{20, {4}, 0.5, 1.0};
  const LinearOperator op = LinearOperator::dense(testing::random_matrix(rng, 20, 20));
  PnpConfig c;
  c.inner_cg_max_iters = 1;
  c.inner_cg_tol = 1e-14;
  try {
    admm_solve(IcnnParams::zeros(arch), arch, op, random_vector(rng, 20), c, Eigen::VectorXd::Zero(20));
    FAIL() << "expected PnpError";
  } catch (const PnpError& e) {
    EXPECT_EQ(e.iteration, 1);
  }
}

TEST(Pnp, DimensionChecks) {
  const IcnnArch arch{3, {2}, 0.5, 1.0};
  const IcnnParams p = IcnnParams::zeros(arch);
  PnpConfig c;
  EXPECT_THROW(admm_solve(p, arch, LinearOperator::identity(4), Eigen::VectorXd::Zero(4), c, Eigen::VectorXd::Zero(4)),
               std::invalid_argument);
  EXPECT_THROW(pgd_solve(p, arch, LinearOperator::identity(3), Eigen::VectorXd::Zero(2), c, Eigen::VectorXd::Zero(3)),
               std::invalid_argument);
}

TEST(Pnp, ObjectiveTraceWithZeroPriorIsDataFidelity) {
  std::mt19937_64 rng(7);
  const Eigen::VectorXd y = random_vector(rng, 6);
  PnpConfig c;
  c.eta = 0.5;
  c.max_iters = 10;
  c.fp_tol = 0.0;
  c.record_iterates = true;
  const LinearOperator op = LinearOperator::identity(6);
  const PnpResult r = pgd_solve(IcnnParams::zeros(kIdentityArch), kIdentityArch, op, y, c, Eigen::VectorXd::Zero(6));
  const ObjectiveTrace t = pgd_objective_trace(IcnnParams::zeros(kIdentityArch), kIdentityArch, op, y, r.state, 0.5);
  ASSERT_TRUE(t.all_converged());
  ASSERT_EQ(t.values.size(), r.state.iterates.size());
  for (std::size_t k = 0; k < t.values.size(); ++k) {
    EXPECT_NEAR(t.values[k], 0.5 * (y - r.state.iterates[k]).squaredNorm(), 1e-9);
    if (k > 0) EXPECT_LT(t.values[k], t.values[k - 1]);
  }

  PnpState single;
  single.iterates = {y};
  const ObjectiveTrace one = pgd_objective_trace(IcnnParams::zeros(kIdentityArch), kIdentityArch, op, y, single, 0.5);
  ASSERT_EQ(one.values.size(), 1u);
  EXPECT_TRUE(std::isfinite(one.values[0]));
  EXPECT_THROW(pgd_objective_trace(IcnnParams::zeros(kIdentityArch), kIdentityArch, op, y, PnpState{}, 0.5),
               std::invalid_argument);
}

TEST(Pnp, PgdObjectiveNonIncreasingOnTrainedStyleNetwork) {
  const IcnnArch arch{4, {8}, 0.5, 2.0};
  const IcnnParams p = random_params(arch, 13);
  std::mt19937_64 rng(8);
  const LinearOperator op = LinearOperator::blur(Eigen::Vector3d(0.25, 0.5, 0.25), 4);
  const Eigen::VectorXd y = random_vector(rng, 4);
  PnpConfig c;
  c.max_iters = 50;
  c.record_iterates = true;
  const PnpResult r = pgd_solve(p, arch, op, y, c, adjoint(op, y));
  const ObjectiveTrace t = pgd_objective_trace(p, arch, op, y, r.state, r.state.step);
  ASSERT_TRUE(t.all_converged());
  for (std::size_t k = 1; k < t.values.size(); ++k) EXPECT_LE(t.values[k], t.values[k - 1] + 1e-8);
}

}  // namespace
}  // namespace lpn
