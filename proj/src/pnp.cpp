#include "lpn/pnp.hpp"

#include <cmath>
#include <sstream>

#include "lpn/prior.hpp"

namespace lpn {
namespace {

void check_problem(const IcnnArch& arch, const LinearOperator& op, const Eigen::VectorXd& y,
                   const Eigen::VectorXd& x0) {
  if (op.input_dim() != arch.input_dim) throw std::invalid_argument("pnp: operator input dim != network dim");
  if (y.size() != op.output_dim()) throw std::invalid_argument("pnp: measurement has wrong dimension");
  if (x0.size() != op.input_dim()) throw std::invalid_argument("pnp: initial iterate has wrong dimension");
}

void check_alpha(const IcnnArch& arch, std::vector<std::string>& warnings) {
  if (!(arch.alpha > 0.0 && arch.alpha < 1.0))
    warnings.push_back("alpha = " + std::to_string(arch.alpha) + " lies outside (0, 1)");
}

Eigen::VectorXd data_gradient(const LinearOperator& op, const Eigen::VectorXd& y, const Eigen::VectorXd& x) {
  return adjoint(op, apply(op, x) - y);
}

}  // namespace

double data_fidelity(const LinearOperator& op, const Eigen::VectorXd& y, const Eigen::VectorXd& x) {
  return 0.5 * (y - apply(op, x)).squaredNorm();
}

AdmmTriple admm_step(const IcnnParams& params, const IcnnArch& arch, const LinearOperator& op,
                     const Eigen::VectorXd& y, double rho, const AdmmTriple& current, double cg_tol,
                     int cg_max_iters, int* cg_iterations) {
  if (!(rho > 0.0)) throw std::invalid_argument("admm_step: rho must be positive");
  const Eigen::VectorXd rhs = adjoint(op, y) + rho * (current.z - current.u);
  const CgResult cg = cg_solve([&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return normal_apply(op, v) + rho * v; },
                               rhs, cg_tol, cg_max_iters, &current.x);
  if (cg_iterations) *cg_iterations = cg.iterations;
  if (!cg.converged) {
    std::ostringstream msg;
    msg << "admm_step: inner CG did not reach tolerance " << cg_tol << " (residual " << cg.residual_norm << ")";
    throw PnpError(msg.str(), -1);
  }
  AdmmTriple next;
  next.x = cg.x;
  next.u = current.u + next.x - current.z;
  next.z = lpn_forward(params, arch, next.u + next.x);
  return next;
}

PnpResult admm_solve(const IcnnParams& params, const IcnnArch& arch, const LinearOperator& op,
                     const Eigen::VectorXd& y, const PnpConfig& config, const Eigen::VectorXd& x0) {
  check_problem(arch, op, y, x0);
  PnpState state;
  state.op_norm = op_norm_sq(op, config.power_iters, config.power_seed).value;
  state.step = config.rho > 0.0 ? config.rho : 1.1 * state.op_norm;
  if (!(state.step > 0.0)) throw std::invalid_argument("admm_solve: zero operator and no rho given");
  if (!(state.step > state.op_norm))
    state.warnings.push_back("rho = " + std::to_string(state.step) + " does not exceed ||A^T A|| ~ " +
                             std::to_string(state.op_norm));
  check_alpha(arch, state.warnings);

  AdmmTriple cur{x0, Eigen::VectorXd::Zero(x0.size()), x0};
  if (config.record_iterates) state.iterates.push_back(cur.x);
  for (int k = 0; k < config.max_iters; ++k) {
    AdmmTriple next;
    IterationRecord rec;
    rec.iteration = k + 1;
    try {
      next = admm_step(params, arch, op, y, state.step, cur, config.inner_cg_tol, config.inner_cg_max_iters,
                       &rec.cg_iterations);
    } catch (const PnpError& e) {
      throw PnpError(std::string(e.what()) + " at ADMM iteration " + std::to_string(k + 1), k + 1);
    }
    rec.fp_residual = std::sqrt((next.x - cur.x).squaredNorm() + (next.u - cur.u).squaredNorm() +
                                (next.z - cur.z).squaredNorm());
    rec.primal_residual = (next.x - next.z).norm();
    rec.objective_proxy = data_fidelity(op, y, next.x);
    state.history.push_back(rec);
    cur = std::move(next);
    if (config.record_iterates) state.iterates.push_back(cur.x);
    state.iterations = k + 1;
    if (rec.fp_residual <= config.fp_tol && rec.primal_residual <= config.fp_tol) {
      state.converged = true;
      break;
    }
  }
  state.x = cur.x;
  state.u = cur.u;
  state.z = cur.z;
  return {state.x, std::move(state)};
}

Eigen::VectorXd pgd_step(const IcnnParams& params, const IcnnArch& arch, const LinearOperator& op,
                         const Eigen::VectorXd& y, double eta, const Eigen::VectorXd& x) {
  return lpn_forward(params, arch, (x - eta * data_gradient(op, y, x)).eval());
}

PnpResult pgd_solve(const IcnnParams& params, const IcnnArch& arch, const LinearOperator& op,
                    const Eigen::VectorXd& y, const PnpConfig& config, const Eigen::VectorXd& x0) {
  check_problem(arch, op, y, x0);
  PnpState state;
  state.op_norm = op_norm_sq(op, config.power_iters, config.power_seed).value;
  state.step = config.eta > 0.0 ? config.eta : 0.9 / state.op_norm;
  if (!(state.step > 0.0) || !std::isfinite(state.step))
    throw std::invalid_argument("pgd_solve: zero operator and no eta given");
  if (!(state.step * state.op_norm < 1.0))
    state.warnings.push_back("eta = " + std::to_string(state.step) + " is not below 1/||A^T A|| ~ " +
                             std::to_string(1.0 / state.op_norm));
  check_alpha(arch, state.warnings);

  Eigen::VectorXd x = x0;
  if (config.record_iterates) state.iterates.push_back(x);
  for (int k = 0; k < config.max_iters; ++k) {
    Eigen::VectorXd next = pgd_step(params, arch, op, y, state.step, x);
    IterationRecord rec;
    rec.iteration = k + 1;
    rec.fp_residual = (next - x).norm();
    rec.objective_proxy = data_fidelity(op, y, next);
    state.history.push_back(rec);
    x = std::move(next);
    if (config.record_iterates) state.iterates.push_back(x);
    state.iterations = k + 1;
    if (rec.fp_residual <= config.fp_tol) {
      state.converged = true;
      break;
    }
  }
  state.x = x;
  state.z = x;
  state.u = Eigen::VectorXd::Zero(x.size());
  return {state.x, std::move(state)};
}

KktResiduals kkt_residuals(const IcnnParams& params, const IcnnArch& arch, const LinearOperator& op,
                           const Eigen::VectorXd& y, const PnpState& state, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("kkt_residuals: rho must be positive");
  KktResiduals r;
  r.r1 = (state.x - state.z).norm();
  r.r2 = (state.u + data_gradient(op, y, state.x) / rho).norm();
  const Eigen::VectorXd v = state.u + state.x;
  const Eigen::VectorXd grad_prior = v - lpn_forward(params, arch, v);
  r.r3 = (state.u - grad_prior).norm();
  return r;
}

bool ObjectiveTrace::all_converged() const {
  for (bool c : converged)
    if (!c) return false;
  return true;
}

ObjectiveTrace pgd_objective_trace(const IcnnParams& params, const IcnnArch& arch, const LinearOperator& op,
                                   const Eigen::VectorXd& y, const PnpState& state, double eta, double tol) {
  if (state.iterates.empty())
    throw std::invalid_argument("pgd_objective_trace: no recorded iterates (set PnpConfig::record_iterates)");
  if (!(eta > 0.0)) throw std::invalid_argument("pgd_objective_trace: eta must be positive");
  ObjectiveTrace trace;
  for (std::size_t k = 0; k < state.iterates.size(); ++k) {
    const Eigen::VectorXd& xk = state.iterates[k];
    std::optional<Eigen::VectorXd> start;
    if (k > 0) {
      const Eigen::VectorXd& prev = state.iterates[k - 1];
      start = (prev - eta * data_gradient(op, y, prev)).eval();
    }
    const PriorEval prior = eval_prior(params, arch, xk, tol, kDefaultInversionIters, start);
    trace.values.push_back(data_fidelity(op, y, xk) + prior.value / eta);
    trace.converged.push_back(prior.ok());
  }
  return trace;
}

}  // namespace lpn
