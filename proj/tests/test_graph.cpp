#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "restless_bai/graph.hpp"

using namespace restless_bai;

TEST_CASE("single cycle is one component") {
  std::vector<std::vector<int>> adj{{1}, {2}, {0}};
  int n = 0;
  scc_components(adj, &n);
  CHECK(n == 1);
  CHECK(strongly_connected(adj));
}

TEST_CASE("chain splits into singletons") {
  std::vector<std::vector<int>> adj{{1}, {2}, {}};
  int n = 0;
  std::vector<int> comp = scc_components(adj, &n);
  CHECK(n == 3);
  CHECK_FALSE(strongly_connected(adj));
  // Reverse topological order: the sink comes first.
  CHECK(comp[2] < comp[1]);
  CHECK(comp[1] < comp[0]);
}

TEST_CASE("two cycles joined by a one-way bridge") {
  // 0 <-> 1 -> 2 <-> 3
  std::vector<std::vector<int>> adj{{1}, {0, 2}, {3}, {2}};
  int n = 0;
  std::vector<int> comp = scc_components(adj, &n);
  CHECK(n == 2);
  CHECK(comp[0] == comp[1]);
  CHECK(comp[2] == comp[3]);
  CHECK(comp[0] != comp[2]);
  auto closed = closed_components(adj);
  REQUIRE(closed.size() == 1);
  std::sort(closed[0].begin(), closed[0].end());
  CHECK(closed[0] == std::vector<int>{2, 3});
}

TEST_CASE("two disjoint cycles are both closed") {
  std::vector<std::vector<int>> adj{{1}, {0}, {3}, {2}};
  auto closed = closed_components(adj);
  CHECK(closed.size() == 2);
}

TEST_CASE("self loop without outgoing edges is closed") {
  std::vector<std::vector<int>> adj{{0, 1}, {1}};
  auto closed = closed_components(adj);
  REQUIRE(closed.size() == 1);
  CHECK(closed[0] == std::vector<int>{1});
}

TEST_CASE("large random graph component count agrees with reachability") {
  // Two blocks with edges only from the first block into the second; each
  // block internally strongly connected through a ring.
  const int half = 40;
  std::vector<std::vector<int>> adj(2 * half);
  for (int i = 0; i < half; ++i) {
    adj[i].push_back((i + 1) % half);
    adj[half + i].push_back(half + (i + 1) % half);
    adj[i].push_back(half + i);
  }
  int n = 0;
  std::vector<int> comp = scc_components(adj, &n);
  CHECK(n == 2);
  CHECK(comp[0] == comp[half - 1]);
  CHECK(comp[half] == comp[2 * half - 1]);
  CHECK(closed_components(adj).size() == 1);
}
