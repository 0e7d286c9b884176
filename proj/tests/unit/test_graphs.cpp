#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <sstream>

#include "decopt/error.hpp"
#include "decopt/graphs.hpp"

using namespace decopt;

namespace {

// Breadth-first search over out-arcs; independent of GraphSnapshot::strongly_connected.
bool bfs_reaches_all(const GraphSnapshot& g, NodeId from, bool reverse) {
  std::vector<bool> seen(g.size(), false);
  std::queue<NodeId> q;
  q.push(from);
  seen[from] = true;
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop();
    for (NodeId v = 0; v < g.size(); ++v) {
      const bool arc = reverse ? g.has_edge(v, u) : g.has_edge(u, v);
      if (arc && !seen[v]) {
        seen[v] = true;
        q.push(v);
      }
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

bool bfs_strongly_connected(const GraphSnapshot& g) {
  return g.size() == 0 || (bfs_reaches_all(g, 0, false) && bfs_reaches_all(g, 0, true));
}

std::set<std::pair<NodeId, NodeId>> arc_set(const GraphSnapshot& g) {
  auto arcs = g.arcs();
  return {arcs.begin(), arcs.end()};
}

}  // namespace

TEST_CASE("path of three nodes") {
  const GraphSnapshot g = build_graph({Family::kPath, 3}, 0);
  CHECK(g.size() == 3);
  CHECK_FALSE(g.directed());
  CHECK(g.has_self_loops());
  CHECK(g.has_edge(0, 1));
  CHECK(g.has_edge(1, 0));
  CHECK(g.has_edge(1, 2));
  CHECK_FALSE(g.has_edge(0, 2));
  CHECK(g.out_degree(0) == 2);
  CHECK(g.out_degree(1) == 3);
  CHECK(g.out_degree(2) == 2);
  CHECK(g.degree_without_self(1) == 2);
}

TEST_CASE("complete graph on four nodes") {
  const GraphSnapshot g = build_graph({Family::kComplete, 4}, 0);
  for (NodeId i = 0; i < 4; ++i) {
    for (NodeId j = 0; j < 4; ++j) CHECK(g.has_edge(i, j));
  }
  CHECK(g.max_degree_without_self() == 3);
}

TEST_CASE("star, two-star and grids have the expected shape") {
  const GraphSnapshot star = build_graph({Family::kStar, 5}, 0);
  CHECK(star.degree_without_self(0) == 4);
  for (NodeId i = 1; i < 5; ++i) CHECK(star.degree_without_self(i) == 1);

  const GraphSnapshot two = build_graph({Family::kTwoStar, 8}, 0);
  std::size_t hubs = 0;
  for (NodeId i = 0; i < 8; ++i) hubs += two.degree_without_self(i) == 4 ? 1 : 0;
  CHECK(hubs == 2);  // three leaves plus the other hub
  CHECK(bfs_strongly_connected(two));
  CHECK_THROWS_AS(build_graph({Family::kTwoStar, 7}, 0), std::invalid_argument);

  const GraphSnapshot grid = build_graph({Family::kGrid2d, 9}, 0);
  CHECK(grid.degree_without_self(4) == 4);
  CHECK(grid.degree_without_self(0) == 2);
  CHECK_THROWS_AS(build_graph({Family::kGrid2d, 10}, 0), std::invalid_argument);

  FamilySpec cube{Family::kGridK, 8};
  cube.grid_dim = 3;
  const GraphSnapshot c = build_graph(cube, 0);
  for (NodeId i = 0; i < 8; ++i) CHECK(c.degree_without_self(i) == 3);
}

TEST_CASE("directed cycle") {
  const GraphSnapshot g = build_graph({Family::kDirectedCycle, 5}, 0);
  CHECK(g.directed());
  for (NodeId i = 0; i < 5; ++i) {
    CHECK(g.has_edge(i, (i + 1) % 5));
    CHECK_FALSE(g.has_edge((i + 1) % 5, i));
    CHECK(g.out_degree(i) == 2);
  }
  CHECK(bfs_strongly_connected(g));
}

TEST_CASE("Erdos-Renyi n=64 eps=1 seed=7 is connected with mean degree near 2 log n") {
  const GraphSnapshot g = build_graph({Family::kErdosRenyi, 64}, 7);
  CHECK(bfs_strongly_connected(g));
  double total = 0.0;
  for (NodeId i = 0; i < 64; ++i) total += static_cast<double>(g.degree_without_self(i));
  const double mean = total / 64.0;
  const double expected = 2.0 * std::log(64.0);
  CHECK(mean > 0.6 * expected);
  CHECK(mean < 1.4 * expected);
}

TEST_CASE("random families are connected and deterministic in the seed") {
  for (Family f : {Family::kErdosRenyi, Family::kGeometric, Family::kExpander}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const FamilySpec spec{f, 40};
      const GraphSnapshot a = build_graph(spec, seed);
      const GraphSnapshot b = build_graph(spec, seed);
      CHECK(a == b);
      CHECK(bfs_strongly_connected(a));
      CHECK(a.strongly_connected());
    }
  }
  const FamilySpec er{Family::kErdosRenyi, 40};
  CHECK_FALSE(build_graph(er, 1) == build_graph(er, 2));
}

TEST_CASE("expander is regular of the requested degree") {
  const GraphSnapshot g = build_graph({Family::kExpander, 30}, 3);
  for (NodeId i = 0; i < 30; ++i) CHECK(g.degree_without_self(i) == 6);
  CHECK_THROWS_AS(build_graph({Family::kExpander, 5}, 0), std::invalid_argument);
}

TEST_CASE("single node graphs are a self-loop") {
  for (Family f : {Family::kPath, Family::kComplete, Family::kStar}) {
    const GraphSnapshot g = build_graph({f, 1}, 0);
    CHECK(g.size() == 1);
    CHECK(g.has_edge(0, 0));
    CHECK(g.strongly_connected());
  }
}

TEST_CASE("family names round-trip") {
  for (Family f : {Family::kPath, Family::kGrid2d, Family::kGridK, Family::kStar, Family::kTwoStar,
                   Family::kComplete, Family::kExpander, Family::kErdosRenyi, Family::kGeometric,
                   Family::kDirectedCycle}) {
    CHECK(parse_family(family_name(f)) == f);
  }
  CHECK_FALSE(parse_family("hypercube").has_value());
}

TEST_CASE("edge list round-trip and malformed input") {
  const GraphSnapshot g = build_graph({Family::kDirectedCycle, 4}, 0);
  std::stringstream ss;
  write_edge_list(ss, g);
  CHECK(read_edge_list(ss) == g);

  std::istringstream bad_header("three 0\n");
  CHECK_THROWS_AS(read_edge_list(bad_header), std::invalid_argument);
  std::istringstream out_of_range("2 1\n0 5\n");
  CHECK_THROWS_AS(read_edge_list(out_of_range), std::invalid_argument);
}

TEST_CASE("static sequence repeats its graph") {
  const GraphSnapshot g = build_graph({Family::kPath, 3}, 0);
  const GraphSequence seq = GraphSequence::fixed(g);
  for (std::size_t k : {0u, 1u, 17u, 1000u}) CHECK(seq.at(k) == g);
}

TEST_CASE("periodic two-node alternation is strongly connected per block") {
  GraphSnapshot a(2, true);
  a.add_edge(0, 1);
  a.add_self_loops();
  GraphSnapshot b(2, true);
  b.add_edge(1, 0);
  b.add_self_loops();
  const GraphSequence seq = GraphSequence::periodic({a, b}, 2);
  CHECK_FALSE(a.strongly_connected());
  CHECK(seq.at(0) == a);
  CHECK(seq.at(3) == b);
  CHECK(certify_B_connectivity(seq, 2, 20).ok);
  CHECK_FALSE(certify_B_connectivity(seq, 1, 20).ok);
}

TEST_CASE("token ring n=4 B=4 reveals one arc per step") {
  const GraphSequence seq = GraphSequence::token_ring(4, 4);
  for (std::size_t k = 0; k < 12; ++k) {
    const GraphSnapshot g = seq.at(k);
    std::set<std::pair<NodeId, NodeId>> expected{{k % 4, (k + 1) % 4}};
    for (NodeId i = 0; i < 4; ++i) expected.insert({i, i});
    CHECK(arc_set(g) == expected);
  }
  // Every aligned 4-block union is the directed cycle with self-loops.
  const GraphSnapshot cycle = build_graph({Family::kDirectedCycle, 4}, 0);
  for (std::size_t l = 0; l < 3; ++l) {
    std::vector<GraphSnapshot> block;
    for (std::size_t k = 4 * l; k < 4 * l + 4; ++k) block.push_back(seq.at(k));
    CHECK(arc_set(graph_union(block)) == arc_set(cycle));
  }
  CHECK(certify_B_connectivity(seq, 4, 40).ok);
}

TEST_CASE("certificate fails at block 0 for disconnected components") {
  GraphSnapshot g(4, false);
  g.add_edge(0, 1);
  g.add_edge(2, 3);
  g.add_self_loops();
  const auto cert = certify_B_connectivity(GraphSequence::fixed(g), 2, 10);
  CHECK_FALSE(cert.ok);
  CHECK(cert.first_failing_block == 0u);
  CHECK(certify_B_connectivity(GraphSequence::fixed(build_graph({Family::kStar, 6}, 0)), 3, 9).ok);
  CHECK_THROWS_AS(certify_B_connectivity(GraphSequence::fixed(g), 3, 10), std::invalid_argument);
}

TEST_CASE("reachable sets") {
  GraphSnapshot chain(3, true);
  chain.add_edge(0, 1);
  chain.add_edge(1, 2);
  chain.add_self_loops();
  const GraphSequence seq = GraphSequence::fixed(chain);
  CHECK(reachable_set(seq, 0, 0, 0) == std::vector<NodeId>{0, 1});
  CHECK(reachable_set(seq, 0, 0, 1) == std::vector<NodeId>{0, 1, 2});
  CHECK(reachable_set(seq, 2, 0, 5) == std::vector<NodeId>{2});

  const GraphSequence ring = GraphSequence::token_ring(4, 4);
  for (NodeId from = 0; from < 4; ++from) {
    CHECK(reachable_set(ring, from, 0, 15).size() == 4);
  }
}

TEST_CASE("reachable sets grow with the window and cover all nodes after nB steps") {
  for (std::size_t n = 2; n <= 6; ++n) {
    for (std::size_t b = 1; b <= 3; ++b) {
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const GraphSequence seq = GraphSequence::random_blocks(n, b, seed);
        REQUIRE(certify_B_connectivity(seq, b, 10 * b).ok);
        for (NodeId from = 0; from < n; ++from) {
          for (std::size_t start = 0; start < 2 * b; ++start) {
            std::size_t previous = 0;
            for (std::size_t len = 1; len <= n * b; ++len) {
              const auto r = reachable_set(seq, from, start, start + len - 1);
              CHECK(r.size() >= previous);
              previous = r.size();
            }
            CHECK(previous == n);
          }
        }
      }
    }
  }
}

TEST_CASE("regenerated sequences are deterministic per step") {
  const GraphSequence seq = GraphSequence::regenerate({Family::kErdosRenyi, 20}, 11);
  CHECK(seq.at(3) == seq.at(3));
  CHECK_FALSE(seq.at(3) == seq.at(4));
  CHECK(seq.at(0) == build_graph({Family::kErdosRenyi, 20}, derive_seed(11, 0)));
}
