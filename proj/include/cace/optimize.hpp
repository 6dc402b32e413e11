#pragma once

#include <functional>
#include <span>
#include <vector>

namespace cace {

// Smooth objective: returns the value at x and writes the gradient into grad
// (same length as x). Minimization convention throughout.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct OptimOptions {
  double grad_tol = 1e-6;   // sup-norm of the gradient at the solution
  int max_iters = 500;
  double wolfe_c1 = 1e-4;   // sufficient decrease
  double wolfe_c2 = 0.9;    // curvature
  // Optional n*n row-major inverse-Hessian seed, e.g. the final model from a
  // fit on closely related data. Must match the problem dimension if set.
  std::vector<double> init_hessian_inv;
};

struct OptimResult {
  std::vector<double> x;
  double value = 0.0;
  double grad_norm = 0.0;  // sup-norm at x
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::vector<double> hessian_inv;  // n*n row-major estimate at x
};

// Dense BFGS with a strong-Wolfe line search. Intended for the small problems
// here (a handful of coordinates), so the inverse-Hessian update is an
// explicit dense matrix. Throws numerical_error if the objective is not
// finite at x0.
OptimResult minimize_bfgs(const Objective& f, std::span<const double> x0,
                          const OptimOptions& opts = {});

}  // namespace cace
