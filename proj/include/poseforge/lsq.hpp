#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace poseforge {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

struct NonFiniteResidual : std::runtime_error {
  VecX params;
  explicit NonFiniteResidual(VecX x)
      : std::runtime_error("solve_lm: residual function returned NaN/Inf"), params(std::move(x)) {}
};

struct LsqProblem {
  std::function<VecX(const VecX&)> residual_fn;
  // Optional analytic Jacobian (m x n). When absent, forward differences are used.
  std::function<MatX(const VecX&)> jacobian_fn;
};

enum class TerminationReason { gradient_tol, step_tol, cost_tol, max_iter };

struct SolveReport {
  VecX solution;
  double final_cost = 0;
  int iterations = 0;
  bool converged = false;
  TerminationReason termination_reason = TerminationReason::max_iter;
};

struct LsqOptions {
  double gradient_tol = 1e-10;  // infinity norm of J^T r
  double step_tol = 1e-12;      // relative step size
  double cost_tol = 0.0;        // absolute cost threshold, 0 disables
  int max_iterations = 200;
};

inline MatX finite_difference_jacobian(const std::function<VecX(const VecX&)>& f,
                                       const VecX& x, const VecX& r0) {
  MatX J(r0.size(), x.size());
  for (int i = 0; i < x.size(); ++i) {
    const double h = std::max(1e-7, 1e-7 * std::abs(x[i]));
    VecX xp = x;
    xp[i] += h;
    J.col(i) = (f(xp) - r0) / h;
  }
  return J;
}

/// Levenberg-Marquardt with multiplicative damping (x10 on reject, /10 on
/// accept) and Marquardt diagonal scaling. Accepted steps never increase cost.
inline SolveReport solve_lm(const LsqProblem& problem, const VecX& x0,
                            const LsqOptions& opts = {}) {
  VecX x = x0;
  VecX r = problem.residual_fn(x);
  if (!r.allFinite()) throw NonFiniteResidual(x);
  double cost = r.squaredNorm();

  SolveReport report;
  double lambda = 1e-3;
  bool have_jacobian = false;
  MatX J;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    if (!have_jacobian) {
      J = problem.jacobian_fn ? problem.jacobian_fn(x)
                              : finite_difference_jacobian(problem.residual_fn, x, r);
      have_jacobian = true;
    }
    VecX g = J.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() < opts.gradient_tol) {
      report.termination_reason = TerminationReason::gradient_tol;
      report.converged = true;
      break;
    }
    if (opts.cost_tol > 0 && cost < opts.cost_tol) {
      report.termination_reason = TerminationReason::cost_tol;
      report.converged = true;
      break;
    }
    MatX JtJ = J.transpose() * J;
    VecX diag = JtJ.diagonal().cwiseMax(1e-12);
    MatX A = JtJ;
    A.diagonal() += lambda * diag;
    VecX step = A.ldlt().solve(-g);

    VecX x_try = x + step;
    VecX r_try = problem.residual_fn(x_try);
    if (!r_try.allFinite()) throw NonFiniteResidual(x_try);
    double cost_try = r_try.squaredNorm();
    ++report.iterations;

    if (cost_try <= cost) {
      const double rel_step = step.norm() / std::max(1.0, x.norm());
      x = x_try;
      r = r_try;
      cost = cost_try;
      lambda = std::max(lambda / 10.0, 1e-15);
      have_jacobian = false;
      if (rel_step < opts.step_tol) {
        report.termination_reason = TerminationReason::step_tol;
        report.converged = true;
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e15) {
        report.termination_reason = TerminationReason::step_tol;
        report.converged = true;
        break;
      }
    }
  }

  report.solution = x;
  report.final_cost = cost;
  if (!report.converged) report.termination_reason = TerminationReason::max_iter;
  return report;
}

}  // namespace poseforge
