#include "zazou/ou_design.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>

namespace zazou {

OUParams OUParams::for_tree(double alpha, double height) {
  if (alpha <= 0.0) throw std::invalid_argument("OUParams: alpha must be > 0");
  OUParams p;
  p.alpha = alpha;
  p.height = height;
  p.sigma2 = 2.0 * alpha / (1.0 - std::exp(-2.0 * alpha * height));
  return p;
}

Eigen::MatrixXd ou_covariance(const TreeGeometry& geo, double alpha,
                              double height) {
  const OUParams params = OUParams::for_tree(alpha, height);
  const double scale = params.sigma2 / (2.0 * alpha);
  const Eigen::Index m = geo.distance.rows();
  Eigen::MatrixXd sigma(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    sigma(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double v = scale * std::exp(-2.0 * alpha * geo.distance(i, j)) *
                       (1.0 - std::exp(-2.0 * alpha * geo.mrca_time(i, j)));
      sigma(i, j) = sigma(j, i) = v;
    }
  }
  return sigma;
}

namespace {

Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() == Eigen::Success) return llt;
  const Eigen::MatrixXd jittered =
      sigma + 1e-10 * Eigen::MatrixXd::Identity(sigma.rows(), sigma.cols());
  llt.compute(jittered);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error(
        "OU covariance is numerically singular even after jitter; "
        "try a larger alpha");
  }
  return llt;
}

}  // namespace

Eigen::MatrixXd whitening_factor(const Eigen::MatrixXd& sigma) {
  const Eigen::Index m = sigma.rows();
  const auto llt = cholesky_with_jitter(sigma);
  const Eigen::MatrixXd sigma_inv =
      llt.solve(Eigen::MatrixXd::Identity(m, m));
  Eigen::LLT<Eigen::MatrixXd> llt_inv(0.5 * (sigma_inv + sigma_inv.transpose()));
  if (llt_inv.info() != Eigen::Success) {
    throw std::runtime_error("whitening_factor: Cholesky of Sigma^{-1} failed");
  }
  // Sigma^{-1} = L L^T  =>  R = L^T is upper triangular with R^T R = Sigma^{-1}
  return llt_inv.matrixL().transpose();
}

OUDesign build_design(const UltrametricTree& tree, const TreeGeometry& geo,
                      const Eigen::VectorXd& z, double alpha) {
  if (z.size() != tree.num_leaves()) {
    throw std::invalid_argument("build_design: z size does not match tree");
  }
  if (!z.allFinite()) {
    throw std::invalid_argument("build_design: z must be finite");
  }
  OUDesign design;
  design.alpha = alpha;
  design.Sigma = ou_covariance(geo, alpha, tree.height());
  design.R = whitening_factor(design.Sigma);
  const Eigen::MatrixXd U = incidence(tree).U;
  design.T = U * tree.shrinkage_diag(alpha).asDiagonal();
  design.X = design.R * design.T;
  design.y = design.R * z;
  {
    const auto llt = cholesky_with_jitter(design.Sigma);
    design.log_det_sigma =
        2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  }
  return design;
}

}  // namespace zazou
