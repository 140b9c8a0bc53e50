#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace zazou {

// Rooted ultrametric tree. Nodes are indexed with internal nodes first
// (root = 0), then leaves in depth-first left-to-right order. Internal
// nodes after the root follow the Fig.-style convention used throughout:
// a depth-first walk that visits the children of each node last-to-first.
// Shift/design columns use this same node order everywhere downstream.
class UltrametricTree {
 public:
  // Parses a single semicolon-terminated Newick tree with branch lengths
  // on all non-root edges. Throws std::runtime_error on syntax errors
  // (position reported), missing branch lengths, duplicate leaf labels,
  // or ultrametricity violations beyond eps_ultra (default 1e-6 * height).
  static UltrametricTree parse_newick(const std::string& text,
                                      double eps_ultra = -1.0);

  // Newick serialization, branch lengths with 10 significant digits.
  std::string to_newick() const;

  int num_leaves() const { return num_leaves_; }
  int num_internal() const { return num_nodes_ - num_leaves_; }
  int num_nodes() const { return num_nodes_; }
  double height() const { return height_; }

  // -1 for the root.
  int parent(int node) const { return parent_[node]; }
  // 0 for the root.
  double branch_length(int node) const { return branch_length_[node]; }
  // time elapsed from the root, t_root = 0.
  double node_time(int node) const { return time_[node]; }
  bool is_leaf(int node) const { return node >= num_internal(); }
  int leaf_node(int leaf) const { return num_internal() + leaf; }
  // children in the order they appeared in the source Newick
  const std::vector<int>& children(int node) const { return children_[node]; }

  const std::vector<std::string>& leaf_labels() const { return leaf_labels_; }

  // Shrinkage diagonal: Lambda_j = 1 - exp(-alpha * (h - t_parent(j))),
  // with t_parent(root) taken as 0. Length num_nodes.
  Eigen::VectorXd shrinkage_diag(double alpha) const;

 private:
  friend UltrametricTree random_ultrametric_tree(int, std::uint64_t, double);
  void finalize(double eps_ultra);

  int num_leaves_ = 0;
  int num_nodes_ = 0;
  double height_ = 0.0;
  std::vector<int> parent_;
  std::vector<double> branch_length_;
  std::vector<double> time_;
  std::vector<std::string> leaf_labels_;
  std::vector<std::vector<int>> children_;
};

// MRCA times, patristic distances and the cophenetic matrix between leaves.
struct TreeGeometry {
  Eigen::MatrixXd mrca_time;   // t_ij, diagonal = h
  Eigen::MatrixXd distance;    // d_ij = t_i + t_j - 2 t_ij
  Eigen::MatrixXd cophenetic;  // = distance restricted to leaves
};

TreeGeometry geometry(const UltrametricTree& tree);

// m x n binary matrix, U_ij = 1 iff leaf i is in the subtree rooted at
// node j. Root column is all ones; leaf columns are canonical vectors.
struct IncidenceMatrix {
  Eigen::MatrixXd U;
};

IncidenceMatrix incidence(const UltrametricTree& tree);

// Random binary ultrametric tree of given height, leaves labeled T1..Tm.
UltrametricTree random_ultrametric_tree(int num_leaves, std::uint64_t seed,
                                        double height = 1.0);

}  // namespace zazou
