#include "zazou/simbench.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "zazou/inference.hpp"
#include "zazou/stats.hpp"

namespace zazou {

std::vector<int> pam_cluster(const Eigen::MatrixXd& distance, int k) {
  const int m = static_cast<int>(distance.rows());
  if (k < 2 || k >= m) throw std::invalid_argument("pam_cluster: need 2 <= k < m");
  if (distance.rows() != distance.cols()) {
    throw std::invalid_argument("pam_cluster: distance must be square");
  }

  std::vector<int> medoids;
  std::vector<bool> is_medoid(static_cast<std::size_t>(m), false);

  auto total_cost = [&](const std::vector<int>& meds) {
    double cost = 0.0;
    for (int i = 0; i < m; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int mm : meds) best = std::min(best, distance(i, mm));
      cost += best;
    }
    return cost;
  };

  // BUILD: greedy cost-minimizing additions, ties to the smallest index
  while (static_cast<int>(medoids.size()) < k) {
    int best_c = -1;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int c = 0; c < m; ++c) {
      if (is_medoid[static_cast<std::size_t>(c)]) continue;
      medoids.push_back(c);
      const double cost = total_cost(medoids);
      medoids.pop_back();
      if (cost < best_cost) {
        best_cost = cost;
        best_c = c;
      }
    }
    medoids.push_back(best_c);
    is_medoid[static_cast<std::size_t>(best_c)] = true;
  }

  // SWAP: apply the best improving swap until none remains
  double current = total_cost(medoids);
  bool improved = true;
  while (improved) {
    improved = false;
    int swap_out = -1, swap_in = -1;
    double best_cost = current;
    for (std::size_t mi = 0; mi < medoids.size(); ++mi) {
      for (int c = 0; c < m; ++c) {
        if (is_medoid[static_cast<std::size_t>(c)]) continue;
        const int saved = medoids[mi];
        medoids[mi] = c;
        const double cost = total_cost(medoids);
        medoids[mi] = saved;
        if (cost < best_cost - 1e-12) {
          best_cost = cost;
          swap_out = static_cast<int>(mi);
          swap_in = c;
        }
      }
    }
    if (swap_out >= 0) {
      is_medoid[static_cast<std::size_t>(medoids[static_cast<std::size_t>(
          swap_out)])] = false;
      medoids[static_cast<std::size_t>(swap_out)] = swap_in;
      is_medoid[static_cast<std::size_t>(swap_in)] = true;
      current = best_cost;
      improved = true;
    }
  }

  std::sort(medoids.begin(), medoids.end());
  std::vector<int> assignment(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    int best = 0;
    for (std::size_t c = 1; c < medoids.size(); ++c) {
      if (distance(i, medoids[c]) < distance(i, medoids[static_cast<std::size_t>(best)])) {
        best = static_cast<int>(c);
      }
    }
    assignment[static_cast<std::size_t>(i)] = best;
  }
  return assignment;
}

AbundanceMatrix homogeneous_base(const UltrametricTree& tree, int num_samples,
                                 std::uint64_t seed) {
  const int m = tree.num_leaves();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  AbundanceMatrix base;
  base.taxa = tree.leaf_labels();
  base.x.resize(m, num_samples);
  base.group.assign(static_cast<std::size_t>(num_samples), 0);
  for (int i = 0; i < m; ++i) {
    const double mu = gauss(rng);
    for (int j = 0; j < num_samples; ++j) {
      base.x(i, j) = std::exp(mu + gauss(rng));
    }
  }
  return base;
}

Replicate simulate_replicate(const AbundanceMatrix& base,
                             const UltrametricTree& tree,
                             const SimScenario& scenario) {
  const int m = tree.num_leaves();
  const int p = static_cast<int>(base.x.cols());
  if (static_cast<int>(base.taxa.size()) != m) {
    throw std::invalid_argument("simulate_replicate: taxa do not match tree");
  }
  if (scenario.fold_change < 1.0) {
    throw std::invalid_argument("simulate_replicate: fold change must be >= 1");
  }
  std::mt19937_64 rng(scenario.seed);

  Replicate rep;
  rep.data = base;
  // balanced random group split
  std::vector<int> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (int j = 0; j < p; ++j) {
    rep.data.group[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] =
        j < p / 2 ? 0 : 1;
  }

  const int target = std::max(
      1, static_cast<int>(std::lround(scenario.prop_da * m)));
  rep.is_da.assign(static_cast<std::size_t>(m), false);
  if (scenario.variant == SimVariant::Positive) {
    int k = scenario.clusters > 0
                ? scenario.clusters
                : std::max(2, static_cast<int>(std::lround(m / 10.0)));
    if (k >= m) {
      throw std::invalid_argument("simulate_replicate: cluster count too large");
    }
    const std::vector<int> clusters = pam_cluster(geometry(tree).cophenetic, k);
    std::vector<int> cluster_order(static_cast<std::size_t>(k));
    std::iota(cluster_order.begin(), cluster_order.end(), 0);
    std::shuffle(cluster_order.begin(), cluster_order.end(), rng);
    int selected = 0;
    for (int c : cluster_order) {
      if (selected >= target) break;
      for (int i = 0; i < m; ++i) {
        if (clusters[static_cast<std::size_t>(i)] == c &&
            !rep.is_da[static_cast<std::size_t>(i)]) {
          rep.is_da[static_cast<std::size_t>(i)] = true;
          ++selected;
        }
      }
    }
    if (selected == 0) {
      throw std::runtime_error("simulate_replicate: no DA taxa selected");
    }
  } else {
    std::vector<int> taxa(static_cast<std::size_t>(m));
    std::iota(taxa.begin(), taxa.end(), 0);
    std::shuffle(taxa.begin(), taxa.end(), rng);
    for (int i = 0; i < target; ++i) {
      rep.is_da[static_cast<std::size_t>(taxa[static_cast<std::size_t>(i)])] =
          true;
    }
  }

  for (int i = 0; i < m; ++i) {
    if (!rep.is_da[static_cast<std::size_t>(i)]) continue;
    for (int j = 0; j < p; ++j) {
      if (rep.data.group[static_cast<std::size_t>(j)] == 1) {
        rep.data.x(i, j) *= scenario.fold_change;
      }
    }
  }
  return rep;
}

namespace {

// linear interpolation of the ROC step curve on the fixed FPR grid; the
// curve is anchored at (0,0) and (1,1)
std::vector<double> interpolate_roc(const std::vector<double>& fpr,
                                    const std::vector<double>& tpr) {
  std::vector<double> grid_tpr(101, 0.0);
  for (int g = 0; g <= 100; ++g) {
    const double x = g / 100.0;
    if (g == 0) {
      grid_tpr[0] = 0.0;
      continue;
    }
    // last point with fpr <= x and first with fpr >= x
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
    for (std::size_t i = 0; i < fpr.size(); ++i) {
      if (fpr[i] <= x) {
        x0 = fpr[i];
        y0 = std::max(y0, tpr[i]);
      } else {
        x1 = fpr[i];
        y1 = tpr[i];
        break;
      }
    }
    grid_tpr[static_cast<std::size_t>(g)] =
        x1 > x0 ? y0 + (y1 - y0) * (x - x0) / (x1 - x0) : y0;
  }
  grid_tpr[100] = 1.0;
  return grid_tpr;
}

}  // namespace

ReplicateMetrics evaluate(const std::string& method,
                          const std::vector<bool>& rejected,
                          const Eigen::VectorXd& scores,
                          const Eigen::VectorXd& raw_p,
                          const std::vector<bool>& truth) {
  const int m = static_cast<int>(truth.size());
  ReplicateMetrics out;
  out.method = method;

  int tp = 0, fp = 0, pos = 0;
  for (int i = 0; i < m; ++i) {
    if (truth[static_cast<std::size_t>(i)]) ++pos;
    if (rejected[static_cast<std::size_t>(i)]) {
      ++out.rejections;
      if (truth[static_cast<std::size_t>(i)]) ++tp;
      else ++fp;
    }
  }
  const int neg = m - pos;
  out.tpr = pos > 0 ? static_cast<double>(tp) / pos : 0.0;
  out.fdr = static_cast<double>(fp) / std::max(out.rejections, 1);

  // ranking by (score, raw p) ascending; AUC via the rank-sum statistic
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  auto key_less = [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return raw_p[a] < raw_p[b];
  };
  auto key_eq = [&](int a, int b) {
    return scores[a] == scores[b] && raw_p[a] == raw_p[b];
  };
  std::sort(order.begin(), order.end(), key_less);

  double rank_sum_neg = 0.0;
  std::vector<double> roc_fpr, roc_tpr;
  int cum_tp = 0, cum_fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && key_eq(order[i], order[j])) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (truth[static_cast<std::size_t>(order[k])]) ++cum_tp;
      else {
        ++cum_fp;
        rank_sum_neg += midrank;
      }
    }
    if (neg > 0 && pos > 0) {
      roc_fpr.push_back(static_cast<double>(cum_fp) / neg);
      roc_tpr.push_back(static_cast<double>(cum_tp) / pos);
    }
    i = j;
  }
  if (pos > 0 && neg > 0) {
    const double dneg = static_cast<double>(neg);
    out.auc = (rank_sum_neg - dneg * (dneg + 1.0) / 2.0) /
              (static_cast<double>(pos) * dneg);
    out.roc_tpr = interpolate_roc(roc_fpr, roc_tpr);
  } else {
    out.auc = 0.0;
    out.roc_tpr.assign(101, 0.0);
  }
  return out;
}

namespace {

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t i) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::vector<CampaignRow> run_campaign(const UltrametricTree& tree,
                                      const std::vector<SimScenario>& scenarios,
                                      const CampaignConfig& config) {
  if (config.replicates < 1) {
    throw std::invalid_argument("run_campaign: replicates must be >= 1");
  }
  const int m = tree.num_leaves();
  const bool want_ss = std::find(config.methods.begin(), config.methods.end(),
                                 "zazou-SS") != config.methods.end();
  const bool want_ci = std::find(config.methods.begin(), config.methods.end(),
                                 "zazou-CI") != config.methods.end();

  std::vector<CampaignRow> rows;
  for (const SimScenario& scenario : scenarios) {
    for (int rep = 0; rep < config.replicates; ++rep) {
      const std::uint64_t seed = mix_seed(scenario.seed, static_cast<std::uint64_t>(rep));
      CampaignRow proto;
      proto.fc = scenario.fold_change;
      proto.variant =
          scenario.variant == SimVariant::Positive ? "positive" : "negative";
      proto.prop_da = scenario.prop_da;
      proto.seed = seed;

      auto emit_fail = [&](const std::string& method, const std::string& err) {
        CampaignRow row = proto;
        row.method = method;
        row.failed = true;
        row.error = err;
        rows.push_back(std::move(row));
      };
      auto emit = [&](const ReplicateMetrics& metrics) {
        CampaignRow row = proto;
        row.method = metrics.method;
        row.tpr = metrics.tpr;
        row.fdr = metrics.fdr;
        row.auc = metrics.auc;
        rows.push_back(std::move(row));
      };

      try {
        const AbundanceMatrix base =
            homogeneous_base(tree, config.num_samples, mix_seed(seed, 7));
        SimScenario local = scenario;
        local.seed = seed;
        const Replicate replicate = simulate_replicate(base, tree, local);

        // per-taxon Wilcoxon p-values
        Eigen::VectorXd p_raw(m);
        for (int i = 0; i < m; ++i) {
          std::vector<double> a, b;
          for (int j = 0; j < static_cast<int>(replicate.data.group.size()); ++j) {
            if (replicate.data.group[static_cast<std::size_t>(j)] == 0) {
              a.push_back(replicate.data.x(i, j));
            } else {
              b.push_back(replicate.data.x(i, j));
            }
          }
          p_raw[i] = wilcoxon_test(a, b);
        }

        for (const std::string& method : config.methods) {
          if (method == "Raw") {
            std::vector<bool> rej(static_cast<std::size_t>(m));
            for (int i = 0; i < m; ++i) {
              rej[static_cast<std::size_t>(i)] = p_raw[i] <= config.alpha_fdr;
            }
            emit(evaluate("Raw", rej, p_raw, p_raw, replicate.is_da));
          } else if (method == "BH" || method == "BY") {
            const std::vector<double> pv(p_raw.data(), p_raw.data() + m);
            const std::vector<double> qv =
                method == "BH" ? bh_adjust(pv) : by_adjust(pv);
            Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(qv.data(), m);
            std::vector<bool> rej(static_cast<std::size_t>(m));
            for (int i = 0; i < m; ++i) {
              rej[static_cast<std::size_t>(i)] = q[i] <= config.alpha_fdr;
            }
            emit(evaluate(method, rej, q, p_raw, replicate.is_da));
          }
        }

        if (want_ss || want_ci) try {
          // the two zazou variants share the (alpha, lambda) grid search
          const std::vector<double> pv(p_raw.data(), p_raw.data() + m);
          const ZScoreVector zs = p_to_z(pv, tree.leaf_labels());
          const BICTrace trace =
              bic_select(tree, zs.z, default_alpha_grid(tree.height()),
                         default_lambda_fractions());
          const BICCell& sel =
              trace.cells[static_cast<std::size_t>(trace.selected)];
          const TreeGeometry geo = geometry(tree);
          const OUDesign design = build_design(tree, geo, zs.z, sel.alpha);
          ShiftFit fit;
          fit.delta = sel.delta;
          fit.sigma_hat = sel.sigma_hat;
          fit.lambda = sel.lambda0;
          fit.converged = sel.converged;

          auto run_variant = [&](DebiasMethod dm, const std::string& name) {
            try {
              const ScoreSystem ss = dm == DebiasMethod::ScoreSystem
                                         ? score_system_ss(design.X)
                                         : score_system_ci(design.X);
              const DebiasedFit dfit =
                  debias(fit, ss, design.X, design.y, design.T);
              const double t_star =
                  fdr_threshold(dfit.t_scores, config.alpha_fdr);
              std::vector<bool> rej(static_cast<std::size_t>(m));
              for (int i = 0; i < m; ++i) {
                rej[static_cast<std::size_t>(i)] =
                    dfit.t_scores[i] <= -t_star;
              }
              emit(evaluate(name, rej, dfit.p_ss, p_raw, replicate.is_da));
            } catch (const std::exception& e) {
              emit_fail(name, e.what());
            }
          };
          if (want_ss) run_variant(DebiasMethod::ScoreSystem, "zazou-SS");
          if (want_ci) run_variant(DebiasMethod::ColwiseInverse, "zazou-CI");
        } catch (const std::exception& e) {
          if (want_ss) emit_fail("zazou-SS", e.what());
          if (want_ci) emit_fail("zazou-CI", e.what());
        }
      } catch (const std::exception& e) {
        for (const std::string& method : config.methods) {
          emit_fail(method, e.what());
        }
      }
    }
  }
  return rows;
}

}  // namespace zazou
