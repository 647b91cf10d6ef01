// Double-loop solver: LBFGS descent in the Cholesky parameters (inner) and
// exponentiated multiplier ascent (outer).
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "cpmp/lbfgs.hpp"
#include "cpmp/objective.hpp"
#include "cpmp/problem.hpp"

namespace cpmp {

struct SolverConfig {
  int lbfgs_memory = 10;
  double inner_grad_tol = 1e-6;
  int inner_max_iters = 100;
  int violation_patience = 5;  // consecutive strict increases of max violation
  int outer_max_iters = 300;
  double eps_c = 1e-4;      // constraint satisfaction tolerance
  double theta_tol = 1e-6;  // parameter stationarity across outer iterations
  double eta_default = 0.5;
  double lambda_min = 1e-12;
  double lambda_max = 1e12;
  bool verbose = false;
};

struct OuterTrace {
  int outer = 0;
  double lagrangian = 0.0;
  double objective = 0.0;
  double max_violation = 0.0;
  double lambda_max = 0.0;
  int inner_iters = 0;
};

struct AdaptationResult {
  ProMP adapted;
  CholeskyParams params;
  std::vector<Eigen::VectorXd> lambdas;
  std::vector<OuterTrace> trace;
  int outer_iters = 0;
  bool converged = false;
  bool infeasible = false;
  double objective_value = 0.0;  // divergence + kappa * E[R] at the solution
  double max_violation = 0.0;
};

// Default multiplier: a single-time constraint pinned to the first or last grid
// time starts at 100, everything else at 1.  A non-negative Constraint::lambda0
// overrides the rule.
inline std::vector<Eigen::VectorXd> init_lambdas(const AdaptationProblem& prob) {
  std::vector<Eigen::VectorXd> lambdas;
  for (const Constraint& c : prob.constraints) {
    const int nt = constraint_term_count(c);
    double v = 1.0;
    if (c.lambda0 >= 0.0) {
      v = c.lambda0;
    } else if (c.kind != ConstraintKind::Smoothness &&
               c.kind != ConstraintKind::UnboundWaypoint && c.support.size() == 1 &&
               (c.support[0] == 0 || c.support[0] == prob.grid_n - 1)) {
      v = 100.0;
    }
    lambdas.push_back(Eigen::VectorXd::Constant(nt, v));
  }
  return lambdas;
}

// One exponentiated ascent step: lambda <- clamp(lambda * exp(eta * residual)).
// The per-step factor is capped to one decade so a large eta paired with a
// strongly violated constraint cannot saturate the multipliers in one step.
inline void emm_step(std::vector<Eigen::VectorXd>& lambdas,
                     const std::vector<std::vector<TermEval>>& terms,
                     const std::vector<Constraint>& constraints, const SolverConfig& cfg) {
  const double max_log_step = std::log(10.0);
  for (size_t ci = 0; ci < lambdas.size(); ++ci) {
    const double eta = constraints[ci].eta > 0.0 ? constraints[ci].eta : cfg.eta_default;
    for (Eigen::Index ti = 0; ti < lambdas[ci].size(); ++ti) {
      const double step =
          std::clamp(eta * terms[ci][ti].residual, -max_log_step, max_log_step);
      const double next = lambdas[ci][ti] * std::exp(step);
      lambdas[ci][ti] = std::clamp(next, cfg.lambda_min, cfg.lambda_max);
    }
  }
}

inline AdaptationResult adapt(const AdaptationProblem& prob, const SolverConfig& cfg = {}) {
  prob.validate();
  const ObjectiveWorkspace ws = make_workspace(prob);
  const int n = prob.original.dim();

  CholeskyParams params = CholeskyParams::from_moments(prob.original.mu_w,
                                                       prob.original.Sigma_w);
  std::vector<Eigen::VectorXd> lambdas = init_lambdas(prob);

  AdaptationResult res;

  LbfgsOptions inner;
  inner.memory = cfg.lbfgs_memory;
  inner.max_iters = cfg.inner_max_iters;
  inner.grad_tol = cfg.inner_grad_tol;

  Eigen::VectorXd theta = params.pack();
  for (int outer = 0; outer < cfg.outer_max_iters; ++outer) {
    const std::vector<int> frozen = unbound_assignments(prob, ws, params);

    const auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
      const CholeskyParams p = CholeskyParams::unpack(x, n);
      const LagrangianResult r = lagrangian(prob, ws, p, lambdas, &frozen, true);
      grad = r.grad;
      return r.value;
    };

    // Stop when the worst violation has strictly increased for `patience`
    // consecutive iterates: the multipliers need an ascent step first.
    int rising = 0;
    double last_violation = std::numeric_limits<double>::infinity();
    const auto stop = [&](const Eigen::VectorXd& x, double) {
      const CholeskyParams p = CholeskyParams::unpack(x, n);
      const LagrangianResult r = lagrangian(prob, ws, p, lambdas, &frozen, false);
      const double v = r.max_violation();
      rising = v > last_violation ? rising + 1 : 0;
      last_violation = v;
      return rising >= cfg.violation_patience;
    };

    const LbfgsResult inner_res = lbfgs_minimize(objective, theta, inner, stop);
    const double step = (inner_res.x - theta).norm();
    theta = inner_res.x;
    params = CholeskyParams::unpack(theta, n);

    const LagrangianResult eval = lagrangian(prob, ws, params, lambdas, &frozen, false);
    res.max_violation = eval.max_violation();
    res.objective_value = eval.objective_value;
    res.outer_iters = outer + 1;

    double lam_max = 0.0;
    for (const auto& l : lambdas)
      if (l.size() > 0) lam_max = std::max(lam_max, l.maxCoeff());
    res.trace.push_back({outer, eval.value, eval.objective_value, res.max_violation, lam_max,
                         inner_res.iterations});

    if (res.max_violation <= cfg.eps_c && step <= cfg.theta_tol) {
      res.converged = true;
      break;
    }
    if (res.max_violation > 10.0 * cfg.eps_c && lam_max >= 1e8) {
      res.infeasible = true;
      break;
    }

    emm_step(lambdas, eval.terms, prob.constraints, cfg);
  }

  res.params = params;
  res.lambdas = std::move(lambdas);
  res.adapted = promp_from_params(prob.original, params);
  return res;
}

}  // namespace cpmp
