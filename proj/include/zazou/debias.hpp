#pragma once

#include <Eigen/Dense>
#include <vector>

#include "zazou/solvers.hpp"

namespace zazou {

enum class DebiasMethod { ScoreSystem, ColwiseInverse };

// Decorrelation vectors s_j used to remove the lasso bias. SS builds them
// as residuals of nodewise lasso regressions; CI solves the columnwise
// quadratic program ||Sigma_hat s - e_j||_inf <= gamma.
struct ScoreSystem {
  Eigen::MatrixXd S;               // m x n, column j = s_j
  Eigen::VectorXd sx;              // <s_j, x_j>
  std::vector<bool> flagged;       // coordinates with <s_j, x_j> ~ 0
  DebiasMethod method = DebiasMethod::ScoreSystem;
  double gamma = 0.0;              // CI only: slack actually used
};

// Residuals of an (unconstrained) lasso regression of x_j on X_{-j}.
// lambda_node <= 0 selects the default sqrt(2 log n / m) * ||x_j|| / sqrt(m)
// per column.
ScoreSystem score_system_ss(const Eigen::MatrixXd& X, double lambda_node = -1.0);

// Columnwise inverse of Sigma_hat = X^T X / m: each s_j minimizes
// s^T Sigma_hat s subject to ||Sigma_hat s - e_j||_inf <= gamma, solved
// through the equivalent lasso-form coordinate descent. When gamma <= 0,
// starts at 0.05 and doubles until every column is solvable; the gamma
// actually used is reported in the result.
ScoreSystem score_system_ci(const Eigen::MatrixXd& X, double gamma = -1.0);

struct DebiasedFit {
  Eigen::VectorXd delta;        // debiased shift estimates
  Eigen::MatrixXd V;            // covariance of the debiased estimates
  Eigen::VectorXd mu_hat;       // T * delta
  Eigen::VectorXd t_scores;     // per-leaf t_i = mu_hat_i / sd(mu_hat_i)
  Eigen::VectorXd p_ss;         // one-sided p-values Phi(t_i)
  std::vector<bool> flagged;    // propagated from the score system
};

// Corrected update delta_j = delta_j^init + <s_j, y - X delta^init> / <s_j, x_j>
// (SS) or delta = delta^init + S X^T (y - X delta^init) / m (CI), with the
// covariance of the corresponding strategy scaled by sigma_hat^2.
DebiasedFit debias(const ShiftFit& fit, const ScoreSystem& ss,
                   const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   const Eigen::MatrixXd& T);

struct ConfidenceIntervals {
  Eigen::MatrixXd shift_bilateral;   // n x 2, [lo, hi] per shift
  Eigen::VectorXd leaf_upper;        // unilateral upper bound per leaf mean
  double level = 0.0;
};

ConfidenceIntervals confidence_intervals(const DebiasedFit& dfit,
                                         const Eigen::MatrixXd& T,
                                         double level);

}  // namespace zazou
