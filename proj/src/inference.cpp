#include "zazou/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace zazou {

ZScoreVector p_to_z(const std::vector<double>& p,
                    const std::vector<std::string>& labels) {
  constexpr double eps = 1e-12;
  ZScoreVector out;
  out.labels = labels;
  const Eigen::Index m = static_cast<Eigen::Index>(p.size());
  out.p.resize(m);
  out.z.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double v = p[static_cast<std::size_t>(i)];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("p_to_z: p-value outside [0, 1]");
    }
    if (v < eps || v > 1.0 - eps) {
      v = std::clamp(v, eps, 1.0 - eps);
      ++out.clamped;
    }
    out.p[i] = v;
    out.z[i] = normal_quantile(v);
  }
  return out;
}

std::vector<double> default_alpha_grid(double height) {
  const double lo = std::log(0.05 / height);
  const double hi = std::log(20.0 / height);
  std::vector<double> grid(8);
  for (int i = 0; i < 8; ++i) {
    grid[static_cast<std::size_t>(i)] = std::exp(lo + (hi - lo) * i / 7.0);
  }
  return grid;
}

std::vector<double> default_lambda_fractions() {
  const double lo = std::log(0.01);
  std::vector<double> grid(10);
  for (int i = 0; i < 10; ++i) {
    grid[static_cast<std::size_t>(i)] = std::exp(lo * (9 - i) / 9.0);
  }
  return grid;
}

BICTrace bic_select(const UltrametricTree& tree, const Eigen::VectorXd& z,
                    const std::vector<double>& alpha_grid,
                    const std::vector<double>& lambda_fractions) {
  if (alpha_grid.empty() || lambda_fractions.empty()) {
    throw std::invalid_argument("bic_select: empty grid");
  }
  const TreeGeometry geo = geometry(tree);
  const double m = static_cast<double>(tree.num_leaves());
  const double support_penalty = std::log(std::log(m)) * std::log(m);

  // descending lambda path for warm starts
  std::vector<double> fractions = lambda_fractions;
  std::sort(fractions.rbegin(), fractions.rend());

  BICTrace trace;
  int failures = 0;
  std::string last_error;
  for (double alpha : alpha_grid) {
    OUDesign design;
    try {
      design = build_design(tree, geo, z, alpha);
    } catch (const std::exception& e) {
      ++failures;
      last_error = e.what();
      continue;
    }
    const double lambda_max =
        (design.X.transpose() * design.y).lpNorm<Eigen::Infinity>();
    Eigen::VectorXd warm = Eigen::VectorXd::Zero(design.X.cols());
    for (double f : fractions) {
      BICCell cell;
      cell.alpha = alpha;
      cell.lambda_fraction = f;
      cell.log_det_sigma = design.log_det_sigma;
      if (design.y.norm() <= 1e-12) {
        // null response: the fit is identically zero
        cell.delta = Eigen::VectorXd::Zero(design.X.cols());
        cell.lambda0 = 0.0;
        cell.sigma_hat = 0.0;
        cell.rss_whitened = design.y.squaredNorm();
      } else {
        cell.lambda0 = f * lambda_max / m;
        ShiftFit fit;
        try {
          // the grid scan only needs objective values; the winning cell is
          // refit below with the optimality certificate enabled
          SolverOptions scan;
          scan.certify = false;
          fit = scaled_lasso(design.X, design.y, design.T, cell.lambda0, scan,
                             &warm);
        } catch (const std::exception& e) {
          ++failures;
          last_error = e.what();
          continue;
        }
        warm = fit.delta;
        cell.delta = fit.delta;
        cell.sigma_hat = fit.sigma_hat;
        cell.converged = fit.converged;
        cell.rss_whitened = (design.y - design.X * fit.delta).squaredNorm();
      }
      cell.support_size =
          static_cast<int>((cell.delta.array() != 0.0).count());
      cell.bic = cell.rss_whitened + cell.log_det_sigma +
                 cell.support_size * support_penalty;
      trace.cells.push_back(std::move(cell));
    }
  }
  if (trace.cells.empty()) {
    throw std::runtime_error("bic_select: all grid cells failed: " +
                             last_error);
  }
  // argmin with ties broken toward larger lambda, then larger alpha
  int best = 0;
  for (int i = 1; i < static_cast<int>(trace.cells.size()); ++i) {
    const auto& a = trace.cells[static_cast<std::size_t>(i)];
    const auto& b = trace.cells[static_cast<std::size_t>(best)];
    const bool better =
        a.bic < b.bic ||
        (a.bic == b.bic &&
         (a.lambda_fraction > b.lambda_fraction ||
          (a.lambda_fraction == b.lambda_fraction && a.alpha > b.alpha)));
    if (better) best = i;
  }
  trace.selected = best;

  // certified refit of the winning cell, warm-started from the scan result
  BICCell& sel = trace.cells[static_cast<std::size_t>(best)];
  if (sel.lambda0 > 0.0) {
    try {
      const OUDesign design = build_design(tree, geo, z, sel.alpha);
      const Eigen::VectorXd start = sel.delta;
      const ShiftFit fit = scaled_lasso(design.X, design.y, design.T,
                                        sel.lambda0, {}, &start);
      sel.delta = fit.delta;
      sel.sigma_hat = fit.sigma_hat;
      sel.converged = fit.converged;
      sel.rss_whitened = (design.y - design.X * fit.delta).squaredNorm();
      sel.support_size = static_cast<int>((sel.delta.array() != 0.0).count());
      sel.bic = sel.rss_whitened + sel.log_det_sigma +
                sel.support_size * support_penalty;
    } catch (const std::exception&) {
      // keep the scan-phase fit; its convergence flag already reflects it
    }
  }
  return trace;
}

double fdr_threshold(const Eigen::VectorXd& t_scores, double alpha_fdr) {
  const Eigen::Index m = t_scores.size();
  if (m < 2) throw std::invalid_argument("fdr_threshold: need m >= 2");
  if (!(alpha_fdr > 0.0 && alpha_fdr < 1.0)) {
    throw std::invalid_argument("fdr_threshold: alpha must be in (0, 1)");
  }
  const double dm = static_cast<double>(m);
  const double inner = 2.0 * std::log(dm) - 2.0 * std::log(std::log(dm));
  const double t_max = inner > 0.0 ? std::sqrt(inner) : 0.0;

  std::vector<double> sorted(t_scores.data(), t_scores.data() + m);
  std::sort(sorted.begin(), sorted.end());
  auto rejections = [&](double t) {
    // R(t) = #{ t_i <= -t }
    return static_cast<double>(
        std::upper_bound(sorted.begin(), sorted.end(), -t) - sorted.begin());
  };
  auto satisfied = [&](double t) {
    const double r = std::max(rejections(t), 1.0);
    // slack absorbs the cdf/quantile round-trip error at equality candidates
    return 2.0 * dm * (1.0 - normal_cdf(t)) / r <=
           alpha_fdr * (1.0 + 1e-9) + 1e-12;
  };

  // candidate thresholds: 0, t_max, the order statistics of -t_i, and the
  // per-piece equality solutions Phi^-1(1 - alpha r / (2m))
  std::vector<double> candidates{0.0, t_max};
  for (double t : sorted) {
    const double c = -t;
    if (c > 0.0 && c <= t_max) candidates.push_back(c);
  }
  for (Eigen::Index r = 0; r <= m; ++r) {
    const double q =
        1.0 - alpha_fdr * std::max(static_cast<double>(r), 1.0) / (2.0 * dm);
    if (q <= 0.0 || q >= 1.0) continue;
    const double c = normal_quantile(q);
    if (c >= 0.0 && c <= t_max) candidates.push_back(c);
  }
  std::sort(candidates.begin(), candidates.end());
  for (double t : candidates) {
    if (satisfied(t)) return t;
  }
  return std::sqrt(2.0 * std::log(dm));
}

CorrectionResult correct(const UltrametricTree& tree,
                         const std::vector<std::string>& labels,
                         const std::vector<double>& p_values,
                         const CorrectConfig& config) {
  const int m = tree.num_leaves();
  if (labels.size() != p_values.size()) {
    throw std::invalid_argument("correct: labels and p-values differ in size");
  }
  if (!(config.alpha_fdr > 0.0 && config.alpha_fdr < 1.0)) {
    throw std::invalid_argument("correct: alpha_fdr must be in (0, 1)");
  }
  // reconcile input order with the tree's leaf order by label
  std::unordered_map<std::string, int> input_index;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!input_index.emplace(labels[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("correct: duplicate input label '" +
                                  labels[i] + "'");
    }
  }
  std::vector<double> p_ordered(static_cast<std::size_t>(m));
  for (int l = 0; l < m; ++l) {
    const auto it = input_index.find(tree.leaf_labels()[static_cast<std::size_t>(l)]);
    if (it == input_index.end()) {
      throw std::invalid_argument("correct: no p-value for tree leaf '" +
                                  tree.leaf_labels()[static_cast<std::size_t>(l)] +
                                  "'");
    }
    p_ordered[static_cast<std::size_t>(l)] =
        p_values[static_cast<std::size_t>(it->second)];
  }
  if (static_cast<int>(labels.size()) != m) {
    throw std::invalid_argument(
        "correct: input has labels not present in the tree");
  }

  CorrectionResult res;
  res.labels = tree.leaf_labels();
  res.alpha_fdr = config.alpha_fdr;
  res.method = config.method;

  const ZScoreVector zs = p_to_z(p_ordered, tree.leaf_labels());
  res.p_raw = zs.p;
  res.z = zs.z;
  if (zs.clamped > 0) {
    res.warnings.push_back(std::to_string(zs.clamped) +
                           " p-value(s) clamped to [1e-12, 1-1e-12]");
  }

  const auto alpha_grid = config.alpha_grid.empty()
                              ? default_alpha_grid(tree.height())
                              : config.alpha_grid;
  const auto fractions = config.lambda_fractions.empty()
                             ? default_lambda_fractions()
                             : config.lambda_fractions;
  res.trace = bic_select(tree, zs.z, alpha_grid, fractions);
  const BICCell& sel =
      res.trace.cells[static_cast<std::size_t>(res.trace.selected)];
  res.alpha_hat = sel.alpha;
  res.lambda_hat_fraction = sel.lambda_fraction;
  if (!sel.converged) {
    res.warnings.push_back("selected grid cell did not fully converge");
  }

  const TreeGeometry geo = geometry(tree);
  const OUDesign design = build_design(tree, geo, zs.z, sel.alpha);
  ShiftFit fit;
  fit.delta = sel.delta;
  fit.sigma_hat = sel.sigma_hat;
  fit.lambda = sel.lambda0;
  fit.converged = sel.converged;
  if (fit.sigma_hat <= 1e-8) {
    throw std::runtime_error(
        "correct: selected fit has a degenerate noise scale");
  }

  ScoreSystem ss = config.method == DebiasMethod::ScoreSystem
                       ? score_system_ss(design.X, config.lambda_node)
                       : score_system_ci(design.X, config.gamma);
  res.gamma_used = ss.gamma;
  for (std::size_t j = 0; j < ss.flagged.size(); ++j) {
    if (ss.flagged[j]) {
      res.warnings.push_back("coordinate " + std::to_string(j) +
                             " is not debiasable (degenerate score)");
    }
  }
  const DebiasedFit dfit = debias(fit, ss, design.X, design.y, design.T);
  res.p_ss = dfit.p_ss;
  res.t_scores = dfit.t_scores;

  res.t_star = fdr_threshold(dfit.t_scores, config.alpha_fdr);
  {
    const double dm = static_cast<double>(m);
    const double inner = 2.0 * std::log(dm) - 2.0 * std::log(std::log(dm));
    res.t_max = inner > 0.0 ? std::sqrt(inner) : 0.0;
  }
  const double denom = normal_cdf(-res.t_star);
  res.q_ss.resize(m);
  res.rejected.assign(static_cast<std::size_t>(m), false);
  for (int i = 0; i < m; ++i) {
    res.q_ss[i] = res.p_ss[i] * config.alpha_fdr / denom;
    res.rejected[static_cast<std::size_t>(i)] =
        res.t_scores[i] <= -res.t_star;
  }
  return res;
}

}  // namespace zazou
