#include <gtest/gtest.h>

#include <random>

#include "flashcg/aggregation.hpp"
#include "flashcg/flash.hpp"
#include "flashcg/neighbor.hpp"

using namespace flashcg;

namespace {

struct RandomGraph {
  NeighborList nl;
  Index nodes = 0;
};

RandomGraph random_graph(Index nodes, Index edges, std::uint64_t seed, bool hub = false) {
  std::mt19937_64 rng(seed);
  RandomGraph g;
  g.nodes = nodes;
  for (Index e = 0; e < edges; ++e) {
    const Index d = hub && (rng() % 2 == 0) ? 0 : static_cast<Index>(rng() % nodes);
    g.nl.dst.push_back(d);
    g.nl.src.push_back(static_cast<Index>(rng() % nodes));
  }
  canonicalize(g.nl);
  return g;
}

template <class T>
Matrix<T> random_values(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix<T> m(rows, cols);
  for (auto& v : m.data) v = static_cast<T>(u(rng));
  return m;
}

}  // namespace

TEST(Aggregation, SegmentReduceMatchesLongDoubleOracle) {
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = random_graph(50 + trial * 7, 2000 + trial * 300, trial, trial % 3 == 0);
    const Index D = 1 + trial * 6;
    const auto v = random_values<double>(g.nl.num_edges(), D, trial + 99);
    const auto layout = group_by_destination(g.nl, g.nodes);
    const auto seg = segment_reduce(v, layout, 1 + trial % 4);
    std::vector<long double> oracle(static_cast<std::size_t>(g.nodes) * D, 0.0L);
    for (Index e = 0; e < g.nl.num_edges(); ++e)
      for (Index k = 0; k < D; ++k) oracle[g.nl.dst[e] * D + k] += v(e, k);
    for (Index i = 0; i < g.nodes; ++i)
      for (Index k = 0; k < D; ++k)
        EXPECT_NEAR(seg(i, k), static_cast<double>(oracle[i * D + k]), 1e-12);
  }
}

TEST(Aggregation, SegmentReduceEqualsScatterAdd) {
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = random_graph(100, 5000, 500 + trial, trial % 2 == 1);
    const auto v = random_values<float>(g.nl.num_edges(), 32, trial);
    TrafficReport t;
    const auto sc = scatter_add(v, g.nl.dst, g.nodes, &t);
    const auto seg = segment_reduce(v, group_by_destination(g.nl, g.nodes));
    EXPECT_EQ(t.atomic_updates, std::int64_t(g.nl.num_edges()) * 32);
    for (std::size_t i = 0; i < sc.data.size(); ++i) EXPECT_NEAR(seg.data[i], sc.data[i], 1e-5);
  }
}

TEST(Aggregation, ResultIndependentOfWorkerCount) {
  // A hub longer than one chunk exercises the chunked partial sums.
  const auto g = random_graph(20, 3 * kSegmentChunk, 7, true);
  const auto v = random_values<float>(g.nl.num_edges(), 8, 8);
  const auto layout = group_by_destination(g.nl, g.nodes);
  ASSERT_GT(layout.segment_size(0), kSegmentChunk);
  const auto ref = segment_reduce(v, layout, 1);
  for (int w : {2, 3, 5, 8}) {
    const auto got = segment_reduce(v, layout, w);
    for (std::size_t i = 0; i < ref.data.size(); ++i) ASSERT_EQ(got.data[i], ref.data[i]) << w;
  }
}

TEST(Aggregation, EmptySegmentsAreZero) {
  NeighborList nl;
  nl.dst = {2, 2};
  nl.src = {0, 1};
  Matrix<double> v(2, 3, 1.5);
  const auto out = segment_reduce(v, group_by_destination(nl, 4));
  for (Index i : {0, 1, 3})
    for (Index k = 0; k < 3; ++k) EXPECT_EQ(out(i, k), 0.0);
  for (Index k = 0; k < 3; ++k) EXPECT_EQ(out(2, k), 3.0);
}

TEST(Aggregation, SegmentBoundsCoverAndNeverSplit) {
  const auto g = random_graph(300, 9000, 3, true);
  const auto layout = group_by_destination(g.nl, g.nodes);
  for (int w : {1, 2, 4, 7, 1000}) {
    const auto b = segment_bounds(layout.ptr, w);
    ASSERT_GE(b.size(), 2u);
    EXPECT_EQ(b.front(), 0u);
    EXPECT_EQ(b.back(), static_cast<std::size_t>(g.nodes));
    EXPECT_LE(b.size() - 1, static_cast<std::size_t>(w));
    for (std::size_t i = 1; i < b.size(); ++i) EXPECT_LE(b[i - 1], b[i]);
  }
}
