#include <queue>
#include <set>

#include "../support/oracles.hpp"
#include "../support/synth.hpp"
#include "doctest.h"
#include "mhub/error.hpp"
#include "mhub/quantizer/hnsw.hpp"
#include "mhub/quantizer/kmeans.hpp"

using namespace mhub;
using namespace mhub::quantizer;

namespace {

double recall(const HnswGraph& g, const FloatMatrix& pts, const FloatMatrix& q, std::size_t ef) {
  const auto truth = testing::brute_assign(pts, q);
  HnswScratch s;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    hit += static_cast<std::int32_t>(g.search(pts, q.row(i), ef, s).index) == truth[i];
  }
  return static_cast<double>(hit) / q.rows();
}

}  // namespace

TEST_SUITE("hnsw") {
  TEST_CASE("tiny graphs") {
    const auto one = testing::random_matrix(1, 4, 1);
    const auto g1 = HnswGraph::build(one, {});
    CHECK(g1.size() == 1);
    CHECK(g1.neighbors(0, 0).empty());
    CHECK(g1.search(one, one.row(0), 8).index == 0);

    const auto two = testing::random_matrix(2, 4, 2);
    const auto g2 = HnswGraph::build(two, {});
    REQUIRE(g2.neighbors(0, 0).size() == 1);
    CHECK(g2.neighbors(0, 0)[0] == 1);
    CHECK(g2.neighbors(1, 0)[0] == 0);

    CHECK_THROWS_AS(HnswGraph().search(one, one.row(0), 8), InputError);
  }

  TEST_CASE("link caps and level-0 connectivity") {
    const auto pts = testing::random_matrix(1000, 64, 3);
    const auto g = HnswGraph::build(pts, {.max_links = 32, .ef_construction = 200, .seed = 4});
    for (std::uint32_t v = 0; v < g.size(); ++v) {
      for (int l = 0; l <= g.level(v); ++l) CHECK(g.neighbors(v, l).size() <= g.max_links_at(l));
    }
    std::vector<bool> seen(g.size(), false);
    std::queue<std::uint32_t> q;
    q.push(g.entry_point());
    seen[g.entry_point()] = true;
    std::size_t reached = 1;
    while (!q.empty()) {
      const auto v = q.front();
      q.pop();
      for (const auto u : g.neighbors(v, 0)) {
        if (!seen[u]) {
          seen[u] = true;
          ++reached;
          q.push(u);
        }
      }
    }
    CHECK(reached == g.size());
  }

  TEST_CASE("exact matches are found") {
    const auto pts = testing::random_matrix(500, 16, 5);
    const auto g = HnswGraph::build(pts, {.max_links = 16, .seed = 1});
    for (std::size_t i = 0; i < pts.rows(); i += 7) CHECK(g.search(pts, pts.row(i), 16).index == i);
  }

  TEST_CASE("recall and ef monotonicity") {
    const auto pts = testing::random_matrix(1000, 64, 6);
    const auto q = testing::random_matrix(2000, 64, 7);
    const auto g = HnswGraph::build(pts, {.max_links = 32, .ef_construction = 200, .seed = 8});
    const double r16 = recall(g, pts, q, 16);
    const double r64 = recall(g, pts, q, 64);
    const double r128 = recall(g, pts, q, 128);
    MESSAGE("recall ef16=" << r16 << " ef64=" << r64 << " ef128=" << r128);
    CHECK(r64 >= 0.95);
    CHECK(r128 >= r16);
  }

  TEST_CASE("build is deterministic and from_parts validates") {
    const auto pts = testing::random_matrix(300, 8, 9);
    const auto a = HnswGraph::build(pts, {.max_links = 8, .seed = 2});
    const auto b = HnswGraph::build(pts, {.max_links = 8, .seed = 2});
    CHECK(a == b);
    CHECK_THROWS_AS(HnswGraph::from_parts(8, 5, 0, {0, 0}, {{{1}}, {{0}}}), InputError);
  }
}
