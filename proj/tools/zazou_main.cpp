// zazou command-line interface: hierarchical p-value correction on an
// ultrametric tree, per-taxon Wilcoxon testing, and the simulation bench.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include "zazou/inference.hpp"
#include "zazou/simbench.hpp"
#include "zazou/stats.hpp"
#include "zazou/tree.hpp"

using nlohmann::json;

namespace {

constexpr int kExitNumerical = 1;
constexpr int kExitValidation = 2;

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw ValidationError("'" + path + "' is empty");
  return rows;
}

double parse_double(const std::string& s, const std::string& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(path + ":" + std::to_string(line) +
                          ": not a number: '" + s + "'");
  }
}

zazou::UltrametricTree load_tree(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open tree file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return zazou::UltrametricTree::parse_newick(buf.str());
  } catch (const std::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_double(item, "<grid>", 0));
  }
  return out;
}

int cmd_correct(const std::string& tree_path, const std::string& pvalues_path,
                const std::string& out_path, double fdr,
                const std::string& method, const std::string& alpha_grid,
                const std::string& lambda_grid, double gamma, bool verbose) {
  const zazou::UltrametricTree tree = load_tree(tree_path);

  const auto rows = read_csv(pvalues_path);
  if (rows[0].size() < 2 || rows[0][0] != "feature_id" ||
      rows[0][1] != "p_value") {
    throw ValidationError(pvalues_path +
                          ":1: expected header 'feature_id,p_value'");
  }
  std::vector<std::string> labels;
  std::vector<double> pvals;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() < 2) {
      throw ValidationError(pvalues_path + ":" + std::to_string(r + 1) +
                            ": expected two columns");
    }
    labels.push_back(rows[r][0]);
    pvals.push_back(parse_double(rows[r][1], pvalues_path, r + 1));
  }
  {
    // validate labels up front so mismatches are reported as input errors
    std::unordered_map<std::string, int> counts;
    for (const auto& l : labels) ++counts[l];
    for (const auto& [label, count] : counts) {
      if (count > 1) {
        throw ValidationError(pvalues_path + ": duplicate label '" + label + "'");
      }
    }
    for (const auto& l : tree.leaf_labels()) {
      if (!counts.count(l)) {
        throw ValidationError(pvalues_path + ": missing p-value for leaf '" +
                              l + "'");
      }
    }
    for (const auto& [label, count] : counts) {
      if (std::find(tree.leaf_labels().begin(), tree.leaf_labels().end(),
                    label) == tree.leaf_labels().end()) {
        throw ValidationError(pvalues_path + ": label '" + label +
                              "' is not a leaf of the tree");
      }
    }
  }

  zazou::CorrectConfig config;
  config.alpha_fdr = fdr;
  config.method = method == "ci" ? zazou::DebiasMethod::ColwiseInverse
                                 : zazou::DebiasMethod::ScoreSystem;
  if (!alpha_grid.empty()) config.alpha_grid = parse_grid(alpha_grid);
  if (!lambda_grid.empty()) config.lambda_fractions = parse_grid(lambda_grid);
  config.gamma = gamma;

  const zazou::CorrectionResult res =
      zazou::correct(tree, labels, pvals, config);

  std::ofstream out(out_path);
  if (!out) throw ValidationError("cannot write '" + out_path + "'");
  out << "feature_id,p_raw,z,p_ss,q_ss,rejected\n";
  for (int i = 0; i < static_cast<int>(res.labels.size()); ++i) {
    out << csv_field(res.labels[static_cast<std::size_t>(i)]) << ','
        << fmt(res.p_raw[i]) << ',' << fmt(res.z[i]) << ','
        << fmt(res.p_ss[i]) << ',' << fmt(res.q_ss[i]) << ','
        << (res.rejected[static_cast<std::size_t>(i)] ? "true" : "false")
        << '\n';
  }

  json report;
  report["alpha_hat"] = res.alpha_hat;
  report["lambda_hat_fraction"] = res.lambda_hat_fraction;
  report["t_star"] = res.t_star;
  report["t_max"] = res.t_max;
  report["alpha_fdr"] = res.alpha_fdr;
  report["method"] = method == "ci" ? "ci" : "ss";
  if (method == "ci") report["gamma_used"] = res.gamma_used;
  report["warnings"] = res.warnings;
  json cells = json::array();
  for (const auto& cell : res.trace.cells) {
    cells.push_back({{"alpha", cell.alpha},
                     {"lambda_fraction", cell.lambda_fraction},
                     {"bic", cell.bic},
                     {"support_size", cell.support_size},
                     {"sigma_hat", cell.sigma_hat},
                     {"converged", cell.converged}});
  }
  report["bic_trace"] = cells;
  report["selected_cell"] = res.trace.selected;
  std::ofstream rep(out_path + ".report.json");
  rep << report.dump(2) << '\n';

  if (verbose) {
    std::cerr << "selected alpha=" << res.alpha_hat
              << " lambda_fraction=" << res.lambda_hat_fraction
              << " t_star=" << res.t_star << '\n';
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  }
  return 0;
}

int cmd_test(const std::string& abundance_path, const std::string& groups_path,
             const std::string& out_path) {
  const auto ab = read_csv(abundance_path);
  if (ab[0].size() < 2) {
    throw ValidationError(abundance_path + ":1: expected sample-id header");
  }
  const std::vector<std::string> sample_ids(ab[0].begin() + 1, ab[0].end());

  const auto gr = read_csv(groups_path);
  if (gr[0].size() < 2 || gr[0][0] != "sample_id" || gr[0][1] != "group") {
    throw ValidationError(groups_path + ":1: expected header 'sample_id,group'");
  }
  std::unordered_map<std::string, std::string> group_of;
  for (std::size_t r = 1; r < gr.size(); ++r) {
    if (gr[r].size() < 2) {
      throw ValidationError(groups_path + ":" + std::to_string(r + 1) +
                            ": expected two columns");
    }
    group_of[gr[r][0]] = gr[r][1];
  }
  std::vector<std::string> levels;
  std::vector<int> sample_group(sample_ids.size());
  for (std::size_t j = 0; j < sample_ids.size(); ++j) {
    const auto it = group_of.find(sample_ids[j]);
    if (it == group_of.end()) {
      throw ValidationError(groups_path + ": no group for sample '" +
                            sample_ids[j] + "'");
    }
    auto lv = std::find(levels.begin(), levels.end(), it->second);
    if (lv == levels.end()) {
      levels.push_back(it->second);
      lv = levels.end() - 1;
    }
    sample_group[j] = static_cast<int>(lv - levels.begin());
  }
  if (levels.size() != 2) {
    throw ValidationError(groups_path + ": expected exactly 2 group levels, got " +
                          std::to_string(levels.size()));
  }

  std::ofstream out(out_path);
  if (!out) throw ValidationError("cannot write '" + out_path + "'");
  out << "feature_id,p_value\n";
  for (std::size_t r = 1; r < ab.size(); ++r) {
    if (ab[r].size() != ab[0].size()) {
      throw ValidationError(abundance_path + ":" + std::to_string(r + 1) +
                            ": wrong number of columns");
    }
    std::vector<double> a, b;
    for (std::size_t j = 1; j < ab[r].size(); ++j) {
      const double v = parse_double(ab[r][j], abundance_path, r + 1);
      (sample_group[j - 1] == 0 ? a : b).push_back(v);
    }
    out << csv_field(ab[r][0]) << ',' << fmt(zazou::wilcoxon_test(a, b))
        << '\n';
  }
  return 0;
}

int cmd_simulate(const std::string& tree_path, int leaves, double fc,
                 const std::string& variant, int replicates, double prop_da,
                 std::uint64_t seed, int samples, double fdr,
                 const std::string& out_path) {
  if (fc < 1.0) throw ValidationError("--fc must be >= 1");
  if (variant != "positive" && variant != "negative") {
    throw ValidationError("--variant must be 'positive' or 'negative'");
  }
  zazou::UltrametricTree tree =
      tree_path.empty() ? zazou::random_ultrametric_tree(leaves, seed)
                        : load_tree(tree_path);

  zazou::SimScenario scenario;
  scenario.fold_change = fc;
  scenario.variant = variant == "positive" ? zazou::SimVariant::Positive
                                           : zazou::SimVariant::Negative;
  scenario.prop_da = prop_da;
  scenario.seed = seed;

  zazou::CampaignConfig config;
  config.num_samples = samples;
  config.replicates = replicates;
  config.alpha_fdr = fdr;

  const auto rows = zazou::run_campaign(tree, {scenario}, config);

  std::ofstream out(out_path);
  if (!out) throw ValidationError("cannot write '" + out_path + "'");
  out << "fc,variant,prop_da,seed,method,tpr,fdr,auc\n";
  for (const auto& row : rows) {
    out << fmt(row.fc) << ',' << row.variant << ',' << fmt(row.prop_da) << ','
        << row.seed << ',' << csv_field(row.method) << ',' << fmt(row.tpr)
        << ',' << fmt(row.fdr) << ',' << fmt(row.auc) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zazou: hierarchical p-value correction via a shifted "
               "Ornstein-Uhlenbeck process on an ultrametric tree"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "verbose diagnostics on stderr");

  // correct
  auto* correct = app.add_subcommand("correct", "correct a p-value table");
  std::string tree_path, pvalues_path, out_path, method = "ss";
  std::string alpha_grid, lambda_grid;
  double fdr = 0.05, gamma = -1.0;
  correct->add_option("--tree", tree_path, "Newick tree file")->required();
  correct->add_option("--pvalues", pvalues_path, "CSV feature_id,p_value")
      ->required();
  correct->add_option("--out", out_path, "output q-value CSV")->required();
  correct->add_option("--fdr", fdr, "target FDR level")->required();
  correct->add_option("--method", method, "debias method: ss or ci")
      ->check(CLI::IsMember({"ss", "ci"}));
  correct->add_option("--alpha-grid", alpha_grid,
                      "comma-separated alpha grid override");
  correct->add_option("--lambda-grid", lambda_grid,
                      "comma-separated lambda fractions override");
  correct->add_option("--gamma", gamma, "CI slack override");

  // test
  auto* test = app.add_subcommand("test", "per-taxon Wilcoxon tests");
  std::string abundance_path, groups_path, test_out;
  test->add_option("--abundance", abundance_path, "taxa x samples CSV")
      ->required();
  test->add_option("--groups", groups_path, "CSV sample_id,group")->required();
  test->add_option("--out", test_out, "output p-value CSV")->required();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "run a simulation campaign");
  std::string sim_tree, variant = "positive", sim_out;
  int leaves = 50, replicates = 10, samples = 100;
  double fc = 10.0, prop_da = 0.2, sim_fdr = 0.05;
  std::uint64_t seed = 42;
  simulate->add_option("--tree", sim_tree, "Newick tree (default: synthetic)");
  simulate->add_option("--leaves", leaves, "leaves of the synthetic tree");
  simulate->add_option("--fc", fc, "fold change");
  simulate->add_option("--variant", variant, "positive or negative");
  simulate->add_option("--replicates", replicates, "number of replicates");
  simulate->add_option("--prop-da", prop_da, "target DA proportion");
  simulate->add_option("--seed", seed, "base seed");
  simulate->add_option("--samples", samples, "samples per replicate");
  simulate->add_option("--fdr", sim_fdr, "target FDR level");
  simulate->add_option("--out", sim_out, "output campaign CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (correct->parsed()) {
      if (!(fdr > 0.0 && fdr < 1.0)) {
        throw ValidationError("--fdr must be in (0, 1)");
      }
      return cmd_correct(tree_path, pvalues_path, out_path, fdr, method,
                         alpha_grid, lambda_grid, gamma, verbose);
    }
    if (test->parsed()) return cmd_test(abundance_path, groups_path, test_out);
    if (simulate->parsed()) {
      return cmd_simulate(sim_tree, leaves, fc, variant, replicates, prop_da,
                          seed, samples, sim_fdr, sim_out);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
