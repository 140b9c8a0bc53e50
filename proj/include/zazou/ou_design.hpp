#pragma once

#include <Eigen/Dense>

#include "zazou/tree.hpp"

namespace zazou {

// OU parameters with the white-noise variance pinned so that the marginal
// leaf variance is exactly 1: sigma2 = 2 alpha / (1 - exp(-2 alpha h)).
struct OUParams {
  double alpha;
  double sigma2;
  double height;

  static OUParams for_tree(double alpha, double height);
};

// Sigma_ij = sigma2 / (2 alpha) * exp(-2 alpha d_ij) * (1 - exp(-2 alpha t_ij)),
// unit diagonal by the normalization above.
Eigen::MatrixXd ou_covariance(const TreeGeometry& geo, double alpha,
                              double height);

// Upper-triangular R with Sigma^{-1} = R^T R, so that R Sigma R^T = I.
// A one-shot 1e-10 jitter is added if the Cholesky factorization fails.
Eigen::MatrixXd whitening_factor(const Eigen::MatrixXd& sigma);

// The assembled regression problem: T = U Lambda, X = R T, y = R z.
struct OUDesign {
  Eigen::MatrixXd Sigma;
  Eigen::MatrixXd R;
  Eigen::MatrixXd T;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  double alpha = 0.0;
  double log_det_sigma = 0.0;
};

OUDesign build_design(const UltrametricTree& tree, const TreeGeometry& geo,
                      const Eigen::VectorXd& z, double alpha);

}  // namespace zazou
