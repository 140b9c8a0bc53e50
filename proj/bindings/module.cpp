// Python bindings for the zazou correction pipeline.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "zazou/inference.hpp"
#include "zazou/simbench.hpp"
#include "zazou/stats.hpp"
#include "zazou/tree.hpp"

namespace py = pybind11;
using namespace zazou;

PYBIND11_MODULE(_zazou, m) {
  m.doc() =
      "Hierarchical p-value correction via a shifted Ornstein-Uhlenbeck "
      "process on an ultrametric tree";

  py::class_<UltrametricTree>(m, "Tree")
      .def_static("parse_newick", &UltrametricTree::parse_newick,
                  py::arg("newick"), py::arg("eps_ultra") = -1.0)
      .def_property_readonly("num_leaves", &UltrametricTree::num_leaves)
      .def_property_readonly("height", &UltrametricTree::height)
      .def_property_readonly("leaf_labels", &UltrametricTree::leaf_labels);

  m.def("random_tree", &random_ultrametric_tree, py::arg("num_leaves"),
        py::arg("seed"), py::arg("height") = 1.0);

  m.def("normal_cdf", &normal_cdf, py::arg("x"));
  m.def("normal_quantile", &normal_quantile, py::arg("p"));
  m.def("bh_adjust", &bh_adjust, py::arg("p"));
  m.def("by_adjust", &by_adjust, py::arg("p"));
  m.def("wilcoxon_test", &wilcoxon_test, py::arg("a"), py::arg("b"));
  m.def("fdr_threshold", &fdr_threshold, py::arg("t_scores"),
        py::arg("alpha_fdr"));

  m.def(
      "p_to_z",
      [](const std::vector<double>& p) {
        const ZScoreVector zs = p_to_z(p);
        return py::make_tuple(zs.z, zs.p, zs.clamped);
      },
      py::arg("p"), "Returns (z, clamped_p, num_clamped).");

  m.def(
      "correct",
      [](const UltrametricTree& tree, const std::vector<std::string>& labels,
         const std::vector<double>& p_values, const std::string& method,
         double alpha_fdr, const std::vector<double>& alpha_grid,
         const std::vector<double>& lambda_fractions, double gamma,
         double lambda_node) {
        CorrectConfig config;
        config.alpha_fdr = alpha_fdr;
        if (method != "ss" && method != "ci") {
          throw std::invalid_argument("method must be 'ss' or 'ci'");
        }
        config.method = method == "ci" ? DebiasMethod::ColwiseInverse
                                       : DebiasMethod::ScoreSystem;
        config.alpha_grid = alpha_grid;
        config.lambda_fractions = lambda_fractions;
        config.gamma = gamma;
        config.lambda_node = lambda_node;
        const CorrectionResult res = correct(tree, labels, p_values, config);
        py::dict out;
        out["labels"] = res.labels;
        out["p_raw"] = res.p_raw;
        out["z"] = res.z;
        out["p_ss"] = res.p_ss;
        out["q_ss"] = res.q_ss;
        out["rejected"] = res.rejected;
        out["t_scores"] = res.t_scores;
        out["t_star"] = res.t_star;
        out["t_max"] = res.t_max;
        out["alpha_fdr"] = res.alpha_fdr;
        out["alpha_hat"] = res.alpha_hat;
        out["lambda_hat_fraction"] = res.lambda_hat_fraction;
        out["method"] = method;
        out["gamma_used"] = res.gamma_used;
        out["warnings"] = res.warnings;
        return out;
      },
      py::arg("tree"), py::arg("labels"), py::arg("p_values"),
      py::kw_only(), py::arg("method") = "ss", py::arg("alpha_fdr") = 0.05,
      py::arg("alpha_grid") = std::vector<double>{},
      py::arg("lambda_fractions") = std::vector<double>{},
      py::arg("gamma") = -1.0, py::arg("lambda_node") = -1.0,
      "Run the full correction pipeline and return a result dict.");
}
