#include <doctest.h>

#include <cmath>
#include <queue>
#include <random>

#include "zazou/tree.hpp"

using namespace zazou;

namespace {
const char* kFigTree = "(((T1:1,T2:1):1,T3:2):1,(T4:2,T5:2):1);";
}

TEST_CASE("parse a simple 3-leaf tree") {
  const auto tree = UltrametricTree::parse_newick("((T1:1,T2:1):1,T3:2);");
  CHECK(tree.num_leaves() == 3);
  CHECK(tree.num_internal() == 2);
  CHECK(tree.height() == doctest::Approx(2.0));
  // internal node N2 (index 1) is the cherry parent at time 1
  CHECK(tree.node_time(1) == doctest::Approx(1.0));
  CHECK(tree.leaf_labels() == std::vector<std::string>{"T1", "T2", "T3"});
}

TEST_CASE("five-leaf figure tree") {
  const auto tree = UltrametricTree::parse_newick(kFigTree);
  CHECK(tree.num_leaves() == 5);
  CHECK(tree.num_internal() == 4);
  CHECK(tree.height() == doctest::Approx(3.0));
}

TEST_CASE("parse errors") {
  CHECK_THROWS_WITH_AS(
      UltrametricTree::parse_newick("((T1:1,T2:2):1,T3:2);"),
      doctest::Contains("not ultrametric"), std::runtime_error);
  CHECK_THROWS_WITH_AS(UltrametricTree::parse_newick("((T1:1,T2:1):1,T3);"),
                       doctest::Contains("missing branch length"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(UltrametricTree::parse_newick("(T1:1,T1:1);"),
                       doctest::Contains("duplicate leaf label"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(UltrametricTree::parse_newick("(T1:1,T2:1)"),
                       doctest::Contains("position"), std::runtime_error);
  CHECK_THROWS(UltrametricTree::parse_newick("(:1,T2:1);"));
}

TEST_CASE("geometry of a cherry") {
  const auto tree = UltrametricTree::parse_newick("(A:1,B:1);");
  const auto geo = geometry(tree);
  CHECK(geo.mrca_time(0, 1) == doctest::Approx(0.0));
  CHECK(geo.distance(0, 1) == doctest::Approx(2.0));
  CHECK(geo.distance(0, 0) == 0.0);
  CHECK(geo.mrca_time(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("geometry of the figure tree") {
  const auto tree = UltrametricTree::parse_newick(kFigTree);
  const auto geo = geometry(tree);
  // d(T1,T2) = 2 (h - t_N4) = 2
  CHECK(geo.distance(0, 1) == doctest::Approx(2.0));
  CHECK(geo.distance(0, 4) == doctest::Approx(6.0));
  for (int i = 0; i < 5; ++i) CHECK(geo.distance(i, i) == 0.0);
  CHECK(geo.cophenetic == geo.distance);
}

TEST_CASE("geometry matches brute-force path lengths on random trees") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const auto tree = random_ultrametric_tree(12, seed, 2.0);
    const auto geo = geometry(tree);
    // brute force: BFS over the undirected tree graph with edge weights
    const int n = tree.num_nodes();
    std::vector<std::vector<std::pair<int, double>>> adj(n);
    for (int i = 1; i < n; ++i) {
      adj[i].push_back({tree.parent(i), tree.branch_length(i)});
      adj[tree.parent(i)].push_back({i, tree.branch_length(i)});
    }
    for (int a = 0; a < tree.num_leaves(); ++a) {
      std::vector<double> dist(n, -1.0);
      std::queue<int> q;
      const int src = tree.leaf_node(a);
      dist[src] = 0.0;
      q.push(src);
      while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (auto [v, w] : adj[u]) {
          if (dist[v] < 0.0) {
            dist[v] = dist[u] + w;
            q.push(v);
          }
        }
      }
      for (int b = 0; b < tree.num_leaves(); ++b) {
        CHECK(geo.distance(a, b) ==
              doctest::Approx(dist[tree.leaf_node(b)]).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("incidence matrix of the figure tree matches the printed matrix") {
  const auto tree = UltrametricTree::parse_newick(kFigTree);
  const auto inc = incidence(tree).U;
  REQUIRE(inc.rows() == 5);
  REQUIRE(inc.cols() == 9);
  const double expected[5][9] = {
      {1, 0, 1, 1, 1, 0, 0, 0, 0},
      {1, 0, 1, 1, 0, 1, 0, 0, 0},
      {1, 0, 1, 0, 0, 0, 1, 0, 0},
      {1, 1, 0, 0, 0, 0, 0, 1, 0},
      {1, 1, 0, 0, 0, 0, 0, 0, 1},
  };
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 9; ++j) CHECK(inc(i, j) == expected[i][j]);
  }
}

TEST_CASE("incidence of a single cherry") {
  const auto tree = UltrametricTree::parse_newick("(A:1,B:1);");
  const auto inc = incidence(tree).U;
  CHECK(inc.col(0).sum() == 2.0);           // root column all ones
  CHECK(inc(0, 1) == 1.0);                  // leaf columns are canonical
  CHECK(inc(1, 1) == 0.0);
  CHECK(inc(0, 2) == 0.0);
  CHECK(inc(1, 2) == 1.0);
}

TEST_CASE("a single-node shift propagates to exactly its clade") {
  const auto tree = UltrametricTree::parse_newick(kFigTree);
  const auto U = incidence(tree).U;
  // shift at N4 (index 3): descendants T1, T2
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(9);
  delta[3] = -2.5;
  const Eigen::VectorXd mu = U * delta;
  CHECK(mu[0] == doctest::Approx(-2.5));
  CHECK(mu[1] == doctest::Approx(-2.5));
  CHECK(mu[2] == 0.0);
  CHECK(mu[3] == 0.0);
  CHECK(mu[4] == 0.0);
}

TEST_CASE("shrinkage diagonal") {
  const auto tree = UltrametricTree::parse_newick(kFigTree);
  SUBCASE("alpha = 0 gives the zero vector") {
    CHECK(tree.shrinkage_diag(0.0).lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("alpha = ln 2 at unit depth-to-parent gives 0.5") {
    // leaf T3 hangs below N3 which sits at time 1, h - t_pa = 2
    // use the cherry leaves T1 under N4 (t_pa = 2, h - t_pa = 1)
    const auto lambda = tree.shrinkage_diag(std::log(2.0));
    CHECK(lambda[4] == doctest::Approx(0.5));  // T1 column
    // N4 shrinkage uses its parent N3's time (h - t_N3 = 2)
    CHECK(lambda[3] == doctest::Approx(1.0 - std::exp(-std::log(2.0) * 2.0)));
  }
  SUBCASE("monotone in alpha") {
    const auto l1 = tree.shrinkage_diag(0.3);
    const auto l2 = tree.shrinkage_diag(0.9);
    for (int i = 0; i < 9; ++i) {
      CHECK(l2[i] >= l1[i]);
      CHECK(l1[i] >= 0.0);
      CHECK(l1[i] < 1.0);
    }
  }
}

TEST_CASE("newick round-trip is the identity on random trees") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto tree = random_ultrametric_tree(15, seed, 1.5);
    const auto again = UltrametricTree::parse_newick(tree.to_newick());
    CHECK(again.num_leaves() == tree.num_leaves());
    CHECK(again.leaf_labels() == tree.leaf_labels());
    for (int i = 0; i < tree.num_nodes(); ++i) {
      CHECK(again.parent(i) == tree.parent(i));
      CHECK(again.node_time(i) ==
            doctest::Approx(tree.node_time(i)).epsilon(1e-9));
    }
  }
}
