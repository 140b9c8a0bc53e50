#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "zazou/tree.hpp"

namespace zazou {

// taxa x samples abundances with a two-group sample assignment.
struct AbundanceMatrix {
  Eigen::MatrixXd x;                 // m taxa x p samples, nonnegative
  std::vector<std::string> taxa;     // match tree leaf labels
  std::vector<int> group;            // per sample, 0 = A / 1 = B
};

enum class SimVariant { Positive, Negative };

struct SimScenario {
  double fold_change = 10.0;           // > 1
  SimVariant variant = SimVariant::Positive;
  double prop_da = 0.2;                // target DA proportion
  std::uint64_t seed = 0;
  int clusters = 0;                    // PAM k; 0 => round(m / 10)
};

// PAM (BUILD + SWAP) k-medoids on a precomputed distance matrix.
// Deterministic; returns the cluster index of each point.
std::vector<int> pam_cluster(const Eigen::MatrixXd& distance, int k);

// Homogeneous log-normal base counts: x_ij = exp(mu_i + eps_ij).
AbundanceMatrix homogeneous_base(const UltrametricTree& tree, int num_samples,
                                 std::uint64_t seed);

struct Replicate {
  AbundanceMatrix data;
  std::vector<bool> is_da;  // truth, per taxon in tree leaf order
};

// Random A/B assignment, DA taxa selection (whole PAM clusters on the
// cophenetic distance for the positive variant, uniform for the negative),
// and fold-change applied to group B.
Replicate simulate_replicate(const AbundanceMatrix& base,
                             const UltrametricTree& tree,
                             const SimScenario& scenario);

struct ReplicateMetrics {
  std::string method;
  double tpr = 0.0;
  double fdr = 0.0;
  double auc = 0.0;
  int rejections = 0;
  std::vector<double> roc_tpr;  // at the fixed 101-point FPR grid
};

// Rejection-set and ranking metrics against the truth. Scores rank by
// value ascending (smaller = more significant) with raw-p tie-break.
ReplicateMetrics evaluate(const std::string& method,
                          const std::vector<bool>& rejected,
                          const Eigen::VectorXd& scores,
                          const Eigen::VectorXd& raw_p,
                          const std::vector<bool>& truth);

struct CampaignConfig {
  int num_samples = 100;
  int replicates = 100;
  double alpha_fdr = 0.05;
  std::vector<std::string> methods{"Raw", "BH", "BY", "zazou-SS", "zazou-CI"};
};

struct CampaignRow {
  double fc;
  std::string variant;
  double prop_da;
  std::uint64_t seed;
  std::string method;
  double tpr;
  double fdr;
  double auc;
  bool failed = false;
  std::string error;
};

// One row per (scenario, replicate, method); per-replicate seeds are
// derived from scenario.seed so reruns are bit-reproducible. Replicate
// failures are recorded and the campaign continues.
std::vector<CampaignRow> run_campaign(const UltrametricTree& tree,
                                      const std::vector<SimScenario>& scenarios,
                                      const CampaignConfig& config);

}  // namespace zazou
