#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "zazou/debias.hpp"
#include "zazou/ou_design.hpp"
#include "zazou/solvers.hpp"
#include "zazou/stats.hpp"
#include "zazou/tree.hpp"

namespace zazou {

// z = Phi^{-1}(p) with p clamped to [1e-12, 1 - 1e-12].
struct ZScoreVector {
  Eigen::VectorXd z;
  Eigen::VectorXd p;
  std::vector<std::string> labels;
  int clamped = 0;
};

ZScoreVector p_to_z(const std::vector<double>& p,
                    const std::vector<std::string>& labels = {});

struct BICCell {
  double alpha = 0.0;
  double lambda_fraction = 0.0;  // of lambda_max(alpha)
  double lambda0 = 0.0;          // scaled-lasso base rate actually used
  double bic = 0.0;
  double rss_whitened = 0.0;     // ||y - X delta||^2 = ||z - T delta||^2_{Sigma^-1}
  double log_det_sigma = 0.0;
  int support_size = 0;
  double sigma_hat = 0.0;
  bool converged = true;
  Eigen::VectorXd delta;
};

struct BICTrace {
  std::vector<BICCell> cells;
  int selected = -1;  // index into cells
};

// Grid defaults when the caller passes empty grids: 8 log-spaced alpha in
// [0.05/h, 20/h], 10 geometric lambda fractions in [0.01, 1].
std::vector<double> default_alpha_grid(double height);
std::vector<double> default_lambda_fractions();

// Modified-BIC model selection over the (alpha, lambda) grid. Each cell is
// solved by a warm-started scaled-lasso path; the criterion is
// ||z - T delta||^2_{Sigma^-1} + log|Sigma| + ||delta||_0 log(log m) log m.
// Ties break toward larger lambda, then larger alpha.
BICTrace bic_select(const UltrametricTree& tree, const Eigen::VectorXd& z,
                    const std::vector<double>& alpha_grid,
                    const std::vector<double>& lambda_fractions);

// FDR threshold of the debiased t-scores:
//   t* = inf { 0 <= t <= t_max : 2m (1 - Phi(t)) / (R(t) v 1) <= alpha }
// with R(t) = #{ t_i <= -t }, t_max = sqrt(2 log m - 2 log log m) (floored
// at 0), and fallback sqrt(2 log m) when the set is empty.
double fdr_threshold(const Eigen::VectorXd& t_scores, double alpha_fdr);

struct CorrectConfig {
  std::vector<double> alpha_grid;         // empty => defaults
  std::vector<double> lambda_fractions;   // empty => defaults
  DebiasMethod method = DebiasMethod::ScoreSystem;
  double alpha_fdr = 0.05;
  double gamma = -1.0;        // CI slack; <= 0 => auto
  double lambda_node = -1.0;  // SS nodewise penalty; <= 0 => default
};

struct CorrectionResult {
  std::vector<std::string> labels;
  Eigen::VectorXd p_raw;
  Eigen::VectorXd z;
  Eigen::VectorXd p_ss;
  Eigen::VectorXd q_ss;
  std::vector<bool> rejected;
  Eigen::VectorXd t_scores;
  double t_star = 0.0;
  double t_max = 0.0;
  double alpha_fdr = 0.0;
  double alpha_hat = 0.0;
  double lambda_hat_fraction = 0.0;
  DebiasMethod method = DebiasMethod::ScoreSystem;
  double gamma_used = 0.0;  // CI only
  BICTrace trace;
  std::vector<std::string> warnings;
};

// The full correction pipeline: p -> z, BIC grid search, scaled-lasso fit
// at the selected cell, debiasing, FDR thresholding into q-values.
// Input order is reconciled to the tree by leaf label.
CorrectionResult correct(const UltrametricTree& tree,
                         const std::vector<std::string>& labels,
                         const std::vector<double>& p_values,
                         const CorrectConfig& config);

}  // namespace zazou
