#include "zazou/debias.hpp"

#include <cmath>
#include <stdexcept>

#include "zazou/stats.hpp"

namespace zazou {

namespace {

double soft(double c, double g) {
  if (c > g) return c - g;
  if (c < -g) return c + g;
  return 0.0;
}

// lasso-form coordinate descent for the CI program:
//   min_s s^T G s - 2 s_j + 2 gamma ||s||_1
// whose optimum satisfies ||G s - e_j||_inf <= gamma. Returns false when
// the iterate diverges or the constraint cannot be met (gamma too small
// for a singular G).
bool ci_column(const Eigen::MatrixXd& G, Eigen::Index j, double gamma,
               Eigen::VectorXd& s_out) {
  const Eigen::Index n = G.rows();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(n);  // G * s
  for (int sweep = 0; sweep < 5000; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (G(k, k) <= 0.0) continue;
      const double c = (k == j ? 1.0 : 0.0) - (q[k] - G(k, k) * s[k]);
      const double s_new = soft(c, gamma) / G(k, k);
      const double change = s_new - s[k];
      if (change != 0.0) {
        q += G.col(k) * change;
        s[k] = s_new;
        max_change = std::max(max_change, std::abs(change));
      }
    }
    if (s.lpNorm<Eigen::Infinity>() > 1e8) return false;
    if (max_change < 1e-10) break;
  }
  Eigen::VectorXd viol = G * s;
  viol[j] -= 1.0;
  if (viol.lpNorm<Eigen::Infinity>() > gamma + 1e-6) return false;
  s_out = std::move(s);
  return true;
}

}  // namespace

ScoreSystem score_system_ss(const Eigen::MatrixXd& X, double lambda_node) {
  const Eigen::Index m = X.rows();
  const Eigen::Index n = X.cols();
  ScoreSystem ss;
  ss.method = DebiasMethod::ScoreSystem;
  ss.S.resize(m, n);
  ss.sx.resize(n);
  ss.flagged.assign(static_cast<std::size_t>(n), false);

  const double base_rate =
      default_scaled_lasso_rate(static_cast<int>(m), static_cast<int>(n));
  SolverOptions opts;
  const Eigen::MatrixXd no_constraints(0, n - 1);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::MatrixXd Xmj(m, n - 1);
    Eigen::Index col = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k != j) Xmj.col(col++) = X.col(k);
    }
    const double lam = lambda_node > 0.0
                           ? lambda_node
                           : base_rate * X.col(j).norm() /
                                 std::sqrt(static_cast<double>(m));
    ConstrainedLassoProblem prob{Xmj, X.col(j), no_constraints, lam};
    const ShiftFit fit = constrained_lasso(prob, opts);
    ss.S.col(j) = X.col(j) - Xmj * fit.delta;
    ss.sx[j] = ss.S.col(j).dot(X.col(j));
    if (std::abs(ss.sx[j]) <= 1e-10 * X.col(j).squaredNorm()) {
      ss.flagged[static_cast<std::size_t>(j)] = true;
    }
  }
  return ss;
}

ScoreSystem score_system_ci(const Eigen::MatrixXd& X, double gamma) {
  const Eigen::Index m = X.rows();
  const Eigen::Index n = X.cols();
  const Eigen::MatrixXd G = X.transpose() * X / static_cast<double>(m);

  ScoreSystem ss;
  ss.method = DebiasMethod::ColwiseInverse;
  ss.S.resize(n, n);
  ss.sx.resize(n);
  ss.flagged.assign(static_cast<std::size_t>(n), false);

  double g = gamma > 0.0 ? gamma : 0.05;
  for (int attempt = 0; attempt < 40; ++attempt) {
    bool all_ok = true;
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::VectorXd s;
      if (!ci_column(G, j, g, s)) {
        all_ok = false;
        break;
      }
      ss.S.col(j) = s;
      ss.sx[j] = s.dot(G.col(j));
      ss.flagged[static_cast<std::size_t>(j)] =
          s.lpNorm<Eigen::Infinity>() == 0.0;
    }
    if (all_ok) {
      ss.gamma = g;
      return ss;
    }
    g *= 2.0;
  }
  throw std::runtime_error("score_system_ci: no feasible gamma found");
}

DebiasedFit debias(const ShiftFit& fit, const ScoreSystem& ss,
                   const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   const Eigen::MatrixXd& T) {
  const Eigen::Index m = X.rows();
  const Eigen::Index n = X.cols();
  if (std::isnan(fit.sigma_hat)) {
    throw std::invalid_argument("debias: fit must come from scaled_lasso");
  }
  const double sigma2 = fit.sigma_hat * fit.sigma_hat;
  const Eigen::VectorXd r = y - X * fit.delta;

  DebiasedFit out;
  out.flagged = ss.flagged;
  out.delta = fit.delta;
  out.V.resize(n, n);

  if (ss.method == DebiasMethod::ScoreSystem) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (ss.flagged[static_cast<std::size_t>(j)]) continue;
      out.delta[j] += ss.S.col(j).dot(r) / ss.sx[j];
    }
    const Eigen::MatrixXd gram = ss.S.transpose() * ss.S;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        out.V(i, j) = sigma2 * gram(i, j) / (ss.sx[i] * ss.sx[j]);
      }
    }
  } else {
    const Eigen::MatrixXd G = X.transpose() * X / static_cast<double>(m);
    out.delta += ss.S.transpose() * (X.transpose() * r) /
                 static_cast<double>(m);
    // sigma2-scaled version of S Sigma_hat S^T / m with S stored columnwise
    out.V = sigma2 * (ss.S.transpose() * G * ss.S) / static_cast<double>(m);
  }

  out.mu_hat = T * out.delta;
  const Eigen::MatrixXd TVT = T * out.V * T.transpose();
  out.t_scores.resize(T.rows());
  out.p_ss.resize(T.rows());
  for (Eigen::Index i = 0; i < T.rows(); ++i) {
    const double var = TVT(i, i);
    const double sd = std::sqrt(std::max(var, 1e-300));
    out.t_scores[i] = out.mu_hat[i] / sd;
    double p = normal_cdf(out.t_scores[i]);
    p = std::min(std::max(p, 1e-300), 1.0 - 1e-16);
    out.p_ss[i] = p;
  }
  return out;
}

ConfidenceIntervals confidence_intervals(const DebiasedFit& dfit,
                                         const Eigen::MatrixXd& T,
                                         double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("confidence_intervals: level must be in (0,1)");
  }
  const Eigen::Index n = dfit.delta.size();
  ConfidenceIntervals ci;
  ci.level = level;
  ci.shift_bilateral.resize(n, 2);
  const double z_bi = normal_quantile(1.0 - level / 2.0);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double half = z_bi * std::sqrt(std::max(dfit.V(j, j), 0.0));
    ci.shift_bilateral(j, 0) = dfit.delta[j] - half;
    ci.shift_bilateral(j, 1) = dfit.delta[j] + half;
  }
  const double z_uni = normal_quantile(1.0 - level);
  const Eigen::MatrixXd TVT = T * dfit.V * T.transpose();
  ci.leaf_upper.resize(T.rows());
  for (Eigen::Index i = 0; i < T.rows(); ++i) {
    ci.leaf_upper[i] =
        dfit.mu_hat[i] + z_uni * std::sqrt(std::max(TVT(i, i), 0.0));
  }
  return ci;
}

}  // namespace zazou
