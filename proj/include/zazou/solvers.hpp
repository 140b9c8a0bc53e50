#pragma once

#include <Eigen/Dense>
#include <optional>

namespace zazou {

// min 1/2 ||y - X delta||^2 + lambda ||delta||_1  s.t.  T delta <= 0.
// T may have zero rows, in which case the problem is unconstrained.
struct ConstrainedLassoProblem {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::MatrixXd T;
  double lambda = 0.0;
};

struct SolverOptions {
  double tol = 1e-8;
  int max_sweeps = 10000;
  double feas_eps = 1e-9;
  // Run the duality-gap optimality certificate (and its rescue loop) on the
  // converged point. Disabled for cheap intermediate solves whose result is
  // immediately refined again.
  bool certify = true;
};

struct ShiftFit {
  Eigen::VectorXd delta;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double sigma_hat = 0.0;  // only meaningful for scaled-lasso fits
  double lambda = 0.0;
};

// Solution of the univariate subproblem
//   min_theta 1/2 ||residual - x theta||^2 + lambda |theta|
//   s.t. u + v theta <= 0
// by soft-thresholding followed by projection onto the feasible interval.
// Empty optional when the subproblem is infeasible.
std::optional<double> solve_univariate(const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& residual,
                                       const Eigen::VectorXd& u,
                                       const Eigen::VectorXd& v, double lambda);

// Sign-constrained shooting algorithm: cyclic coordinate descent with
// active-set passes after the first full sweep. init must be feasible
// (default zero). Non-convergence is reported via converged = false.
ShiftFit constrained_lasso(const ConstrainedLassoProblem& problem,
                           const Eigen::VectorXd& init,
                           const SolverOptions& opts = {});
ShiftFit constrained_lasso(const ConstrainedLassoProblem& problem,
                           const SolverOptions& opts = {});

// Constrained scaled lasso: alternates the closed-form noise update
// sigma = ||y - X delta|| / sqrt(m) with a constrained lasso solve at
// penalty lambda0 * m * sigma, until the noise estimate stabilizes.
// Throws if sigma collapses below 1e-8 (degenerate fit).
ShiftFit scaled_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const Eigen::MatrixXd& T, double lambda0,
                      const SolverOptions& opts = {},
                      const Eigen::VectorXd* warm_start = nullptr);

// Default base rate sqrt(2 log n / m) for the scaled lasso.
double default_scaled_lasso_rate(int m, int n);

}  // namespace zazou
