#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lpn/icnn.hpp"
#include "lpn/operators.hpp"

namespace lpn {

class PnpError : public std::runtime_error {
 public:
  PnpError(const std::string& what, int iteration) : std::runtime_error(what), iteration(iteration) {}
  int iteration;
};

struct PnpConfig {
  double rho = 0.0;  // ADMM penalty; <= 0 selects 1.1 * ||A^T A||
  double eta = 0.0;  // PGD step; <= 0 selects 0.9 / ||A^T A||
  int max_iters = 500;
  double fp_tol = 1e-8;
  double inner_cg_tol = 1e-10;
  int inner_cg_max_iters = 1000;
  int power_iters = 200;
  std::uint64_t power_seed = 0;
  bool record_iterates = false;
};

struct IterationRecord {
  int iteration = 0;
  double fp_residual = 0.0;       // change of the iterate (triple) in one step
  double primal_residual = 0.0;   // ||x - z||, 0 for PGD
  double objective_proxy = 0.0;   // data fidelity 0.5 ||y - A x||^2
  int cg_iterations = 0;
};

struct PnpState {
  Eigen::VectorXd x, u, z;
  std::vector<IterationRecord> history;
  std::vector<Eigen::VectorXd> iterates;  // x_0, x_1, ... when recorded
  int iterations = 0;
  bool converged = false;
  double step = 0.0;     // rho (ADMM) or eta (PGD) actually used
  double op_norm = 0.0;  // power-iteration estimate of ||A^T A||
  std::vector<std::string> warnings;  // violated convergence hypotheses
};

struct PnpResult {
  Eigen::VectorXd x;
  PnpState state;
};

struct AdmmTriple {
  Eigen::VectorXd x, u, z;
};

/// One ADMM sweep in (x, u, z) order:
///   x+ = argmin 0.5 ||y - A x||^2 + (rho/2) ||z - u - x||^2   (CG on A^T A + rho I)
///   u+ = u + x+ - z
///   z+ = f(u+ + x+)
AdmmTriple admm_step(const IcnnParams& params, const IcnnArch& arch, const LinearOperator& op,
                     const Eigen::VectorXd& y, double rho, const AdmmTriple& current, double cg_tol = 1e-10,
                     int cg_max_iters = 1000, int* cg_iterations = nullptr);

/// PnP-ADMM from u_0 = 0, z_0 = x_0. Stops when both the triple change and
/// ||x - z|| are <= fp_tol, or after max_iters. Throws PnpError if an inner CG
/// solve fails.
PnpResult admm_solve(const IcnnParams& params, const IcnnArch& arch, const LinearOperator& op,
                     const Eigen::VectorXd& y, const PnpConfig& config, const Eigen::VectorXd& x0);

/// x+ = f(x - eta A^T (A x - y))
Eigen::VectorXd pgd_step(const IcnnParams& params, const IcnnArch& arch, const LinearOperator& op,
                         const Eigen::VectorXd& y, double eta, const Eigen::VectorXd& x);

/// PnP-PGD; stops when ||x_{k+1} - x_k|| <= fp_tol or after max_iters.
PnpResult pgd_solve(const IcnnParams& params, const IcnnArch& arch, const LinearOperator& op,
                    const Eigen::VectorXd& y, const PnpConfig& config, const Eigen::VectorXd& x0);

/// Gaps of the ADMM stationarity conditions at state (x, u, z):
///   r1 = ||x - z||
///   r2 = ||u + (1/rho) A^T (A x - y)||
///   r3 = ||u - grad R(z)||, with grad R(f(v)) = v - f(v) at v = u + x,
///        so r3 = ||x - f(u + x)||.
struct KktResiduals {
  double r1 = 0.0;
  double r2 = 0.0;
  double r3 = 0.0;
  double max() const { return std::max(r1, std::max(r2, r3)); }
};

KktResiduals kkt_residuals(const IcnnParams& params, const IcnnArch& arch, const LinearOperator& op,
                           const Eigen::VectorXd& y, const PnpState& state, double rho);

struct ObjectiveTrace {
  std::vector<double> values;  // h(x_k) + R(x_k) / eta
  std::vector<bool> converged;  // prior inversion status per iterate
  bool all_converged() const;
};

/// h(x_k) + (1/eta) R(x_k) for every recorded iterate (requires
/// PnpConfig::record_iterates). Each inversion is warm-started from the
/// preimage x_{k-1} - eta grad h(x_{k-1}).
ObjectiveTrace pgd_objective_trace(const IcnnParams& params, const IcnnArch& arch, const LinearOperator& op,
                                   const Eigen::VectorXd& y, const PnpState& state, double eta,
                                   double tol = 1e-10);

/// 0.5 ||y - A x||^2
double data_fidelity(const LinearOperator& op, const Eigen::VectorXd& y, const Eigen::VectorXd& x);

}  // namespace lpn
