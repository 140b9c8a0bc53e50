#include "zazou/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace zazou {

namespace {

struct RawNode {
  std::string label;
  double length = std::numeric_limits<double>::quiet_NaN();
  int parent = -1;
  std::vector<int> children;
};

class NewickParser {
 public:
  explicit NewickParser(const std::string& text) : text_(text) {}

  std::vector<RawNode> parse() {
    skip_ws();
    const int root = parse_subtree(-1);
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != ';') {
      fail("expected ';'");
    }
    ++pos_;
    skip_ws();
    if (pos_ != text_.size()) fail("trailing characters after ';'");
    (void)root;
    return std::move(nodes_);
  }

 private:
  int parse_subtree(int parent) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_[id].parent = parent;
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == '(') {
      ++pos_;
      while (true) {
        const int child = parse_subtree(id);
        nodes_[id].children.push_back(child);
        skip_ws();
        if (pos_ >= text_.size()) fail("unterminated '('");
        if (text_[pos_] == ',') {
          ++pos_;
          continue;
        }
        if (text_[pos_] == ')') {
          ++pos_;
          break;
        }
        fail("expected ',' or ')'");
      }
    }
    nodes_[id].label = parse_label();
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == ':') {
      ++pos_;
      nodes_[id].length = parse_number();
    }
    return id;
  }

  std::string parse_label() {
    skip_ws();
    std::string out;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == ':' || c == ',' || c == '(' || c == ')' || c == ';' ||
          std::isspace(static_cast<unsigned char>(c))) {
        break;
      }
      out += c;
      ++pos_;
    }
    return out;
  }

  double parse_number() {
    skip_ws();
    std::size_t consumed = 0;
    double v;
    try {
      v = std::stod(text_.substr(pos_), &consumed);
    } catch (const std::exception&) {
      fail("expected branch length");
      return 0.0;
    }
    pos_ += consumed;
    return v;
  }

  void skip_ws() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }

  [[noreturn]] void fail(const std::string& what) {
    throw std::runtime_error("newick syntax error at position " +
                             std::to_string(pos_) + ": " + what);
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  std::vector<RawNode> nodes_;
};

}  // namespace

UltrametricTree UltrametricTree::parse_newick(const std::string& text,
                                              double eps_ultra) {
  NewickParser parser(text);
  const std::vector<RawNode> raw = parser.parse();

  std::vector<int> leaves_in_order;     // raw ids, depth-first left-to-right
  std::vector<int> internal_in_order;   // raw ids, children visited last-first
  {
    // leaf order: natural depth-first appearance
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i].children.empty()) leaves_in_order.push_back(static_cast<int>(i));
    }
    std::vector<int> stack{0};
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      if (!raw[id].children.empty()) {
        internal_in_order.push_back(id);
        for (int c : raw[id].children) stack.push_back(c);
      }
    }
  }

  UltrametricTree tree;
  tree.num_leaves_ = static_cast<int>(leaves_in_order.size());
  tree.num_nodes_ = static_cast<int>(raw.size());
  const int n_int = tree.num_internal();

  std::vector<int> new_id(raw.size());
  for (int k = 0; k < n_int; ++k) new_id[internal_in_order[k]] = k;
  for (int k = 0; k < tree.num_leaves_; ++k) {
    new_id[leaves_in_order[k]] = n_int + k;
  }

  tree.parent_.assign(tree.num_nodes_, -1);
  tree.branch_length_.assign(tree.num_nodes_, 0.0);
  tree.leaf_labels_.resize(tree.num_leaves_);
  tree.children_.resize(tree.num_nodes_);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const int id = new_id[i];
    for (int c : raw[i].children) tree.children_[id].push_back(new_id[c]);
    if (raw[i].parent >= 0) {
      tree.parent_[id] = new_id[raw[i].parent];
      if (std::isnan(raw[i].length)) {
        throw std::runtime_error("missing branch length on node '" +
                                 raw[i].label + "'");
      }
      tree.branch_length_[id] = raw[i].length;
    }
    if (raw[i].children.empty()) tree.leaf_labels_[id - n_int] = raw[i].label;
  }

  std::unordered_set<std::string> seen;
  for (const auto& label : tree.leaf_labels_) {
    if (label.empty()) throw std::runtime_error("empty leaf label");
    if (!seen.insert(label).second) {
      throw std::runtime_error("duplicate leaf label '" + label + "'");
    }
  }

  tree.finalize(eps_ultra);
  return tree;
}

void UltrametricTree::finalize(double eps_ultra) {
  time_.assign(num_nodes_, 0.0);
  // parents precede children in the internal order, leaves come last
  for (int i = 1; i < num_nodes_; ++i) {
    if (parent_[i] < 0) throw std::runtime_error("multiple roots");
    time_[i] = time_[parent_[i]] + branch_length_[i];
  }
  height_ = 0.0;
  for (int l = 0; l < num_leaves_; ++l) {
    height_ = std::max(height_, time_[leaf_node(l)]);
  }
  const double eps = eps_ultra > 0.0 ? eps_ultra : 1e-6 * height_;
  for (int l = 0; l < num_leaves_; ++l) {
    if (std::abs(time_[leaf_node(l)] - height_) > eps) {
      throw std::runtime_error("tree is not ultrametric: leaf '" +
                               leaf_labels_[l] + "' at depth " +
                               std::to_string(time_[leaf_node(l)]) +
                               " vs height " + std::to_string(height_));
    }
  }
}

std::string UltrametricTree::to_newick() const {
  std::ostringstream out;
  out.precision(10);
  auto emit = [&](auto&& self, int node) -> void {
    if (is_leaf(node)) {
      out << leaf_labels_[node - num_internal()];
    } else {
      out << '(';
      bool first = true;
      for (int c : children_[node]) {
        if (!first) out << ',';
        first = false;
        self(self, c);
      }
      out << ')';
    }
    if (parent_[node] >= 0) out << ':' << branch_length_[node];
  };
  emit(emit, 0);
  out << ';';
  return out.str();
}

Eigen::VectorXd UltrametricTree::shrinkage_diag(double alpha) const {
  if (alpha < 0.0) throw std::invalid_argument("shrinkage_diag: alpha < 0");
  Eigen::VectorXd lambda(num_nodes_);
  for (int i = 0; i < num_nodes_; ++i) {
    const double t_pa = parent_[i] >= 0 ? time_[parent_[i]] : 0.0;
    lambda[i] = 1.0 - std::exp(-alpha * (height_ - t_pa));
  }
  return lambda;
}

TreeGeometry geometry(const UltrametricTree& tree) {
  const int m = tree.num_leaves();
  // root-to-leaf paths
  std::vector<std::vector<int>> paths(m);
  for (int l = 0; l < m; ++l) {
    int node = tree.leaf_node(l);
    while (node >= 0) {
      paths[l].push_back(node);
      node = tree.parent(node);
    }
    std::reverse(paths[l].begin(), paths[l].end());
  }

  TreeGeometry geo;
  geo.mrca_time.resize(m, m);
  geo.distance.resize(m, m);
  for (int i = 0; i < m; ++i) {
    geo.mrca_time(i, i) = tree.height();
    geo.distance(i, i) = 0.0;
    for (int j = i + 1; j < m; ++j) {
      std::size_t k = 0;
      while (k < paths[i].size() && k < paths[j].size() &&
             paths[i][k] == paths[j][k]) {
        ++k;
      }
      const double t_ij = tree.node_time(paths[i][k - 1]);
      const double d = tree.node_time(tree.leaf_node(i)) +
                       tree.node_time(tree.leaf_node(j)) - 2.0 * t_ij;
      geo.mrca_time(i, j) = geo.mrca_time(j, i) = t_ij;
      geo.distance(i, j) = geo.distance(j, i) = d;
    }
  }
  geo.cophenetic = geo.distance;
  return geo;
}

IncidenceMatrix incidence(const UltrametricTree& tree) {
  const int m = tree.num_leaves();
  const int n = tree.num_nodes();
  IncidenceMatrix inc;
  inc.U = Eigen::MatrixXd::Zero(m, n);
  for (int l = 0; l < m; ++l) {
    int node = tree.leaf_node(l);
    while (node >= 0) {
      inc.U(l, node) = 1.0;
      node = tree.parent(node);
    }
  }
  return inc;
}

UltrametricTree random_ultrametric_tree(int num_leaves, std::uint64_t seed,
                                        double height) {
  if (num_leaves < 2) {
    throw std::invalid_argument("random_ultrametric_tree: need >= 2 leaves");
  }
  std::mt19937_64 rng(seed);

  // each internal node sits at a random fraction of the remaining time
  // between its parent and the leaves
  std::uniform_real_distribution<double> frac(0.2, 0.8);

  struct BNode {
    int left = -1, right = -1;  // -1 means leaf
    int leaf = -1;
    double time = 0.0;
  };
  std::vector<BNode> nodes;
  std::vector<int> roots;
  for (int i = 0; i < num_leaves; ++i) {
    BNode b;
    b.leaf = i;
    nodes.push_back(b);
    roots.push_back(static_cast<int>(nodes.size()) - 1);
  }
  while (roots.size() > 1) {
    std::uniform_int_distribution<std::size_t> pick(0, roots.size() - 1);
    std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    while (b == a) b = pick(rng);
    BNode parent;
    parent.left = roots[a];
    parent.right = roots[b];
    nodes.push_back(parent);
    const int pid = static_cast<int>(nodes.size()) - 1;
    if (a > b) std::swap(a, b);
    roots[a] = pid;
    roots.erase(roots.begin() + static_cast<std::ptrdiff_t>(b));
  }
  const int root = roots[0];
  // assign node times top-down
  auto assign = [&](auto&& self, int id, double t_parent) -> void {
    if (nodes[id].leaf >= 0) {
      nodes[id].time = height;
      return;
    }
    nodes[id].time = (id == root)
                         ? 0.0
                         : t_parent + frac(rng) * (height - t_parent);
    self(self, nodes[id].left, nodes[id].time);
    self(self, nodes[id].right, nodes[id].time);
  };
  assign(assign, root, 0.0);

  std::ostringstream out;
  out.precision(17);
  auto emit = [&](auto&& self, int id, double t_parent) -> void {
    if (nodes[id].leaf >= 0) {
      out << 'T' << (nodes[id].leaf + 1);
    } else {
      out << '(';
      self(self, nodes[id].left, nodes[id].time);
      out << ',';
      self(self, nodes[id].right, nodes[id].time);
      out << ')';
    }
    if (id != root) out << ':' << (nodes[id].time - t_parent);
  };
  emit(emit, root, 0.0);
  out << ';';
  return UltrametricTree::parse_newick(out.str());
}

}  // namespace zazou
