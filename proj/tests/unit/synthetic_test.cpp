#include <gtest/gtest.h>

#include "flashcg/neighbor.hpp"
#include "flashcg/synthetic.hpp"
#include "flashcg/verify.hpp"

using namespace flashcg;

TEST(Generator, ChainsHaveRequestedBondLengths) {
  for (auto shape : {SystemShape::coil, SystemShape::helix, SystemShape::globule}) {
    GeneratorOptions go;
    go.shape = shape;
    go.beads = 40;
    go.seed = 3;
    const auto s = generate_system(go);
    ASSERT_EQ(s.size(), 40);
    EXPECT_NO_THROW(s.validate());
    ASSERT_EQ(s.bonds.size(), 39u);
    for (const auto& b : s.bonds) {
      EXPECT_EQ(b.j, b.i + 1);
      EXPECT_NEAR(b.r0, go.bond_length, 1e-9);
      EXPECT_DOUBLE_EQ(b.r0, norm(s.positions[b.i] - s.positions[b.j]));
    }
    for (int t : s.types) EXPECT_LT(t, go.num_types);
  }
}

TEST(Generator, DeterministicPerSeed) {
  GeneratorOptions go;
  go.beads = 25;
  go.seed = 8;
  EXPECT_EQ(generate_system(go).positions, generate_system(go).positions);
  auto other = go;
  other.seed = 9;
  EXPECT_NE(generate_system(go).positions, generate_system(other).positions);
  go.beads = 0;
  EXPECT_THROW(generate_system(go), ConfigError);
}

TEST(Generator, RandomCloudRespectsBoxAndSpacing) {
  const auto x = random_cloud(100, 3.0, 0.2, 1);
  for (const auto& p : x)
    for (double c : p) {
      EXPECT_GE(c, 0.0);
      EXPECT_LE(c, 3.0);
    }
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) EXPECT_GE(norm(x[i] - x[j]), 0.2);
}

TEST(DegreeSkew, EdgeCountsNearTargetAndShapesDiffer) {
  const double cutoff = 1.0;
  const std::int64_t target = 20000;
  const auto uniform = degree_skew_positions(1000, target, false, cutoff, 5);
  const auto skewed = degree_skew_positions(1000, target, true, cutoff, 5);
  ASSERT_EQ(uniform.size(), 1000u);
  ASSERT_EQ(skewed.size(), 1000u);
  const auto nu = build_neighbors_cells(uniform, cutoff);
  const auto ns = build_neighbors_cells(skewed, cutoff);
  EXPECT_NEAR(double(nu.num_edges()), double(target), 0.15 * target);
  EXPECT_NEAR(double(ns.num_edges()), double(target), 0.15 * target);
  auto max_degree = [](const NeighborList& nl) {
    std::vector<int> deg(1000, 0);
    for (Index d : nl.dst) ++deg[d];
    return *std::max_element(deg.begin(), deg.end());
  };
  EXPECT_GT(max_degree(ns), 2 * max_degree(nu));
}

TEST(DenseCloud, MeetsEdgeTarget) {
  const auto x = dense_cloud(300, 20.0, 1.5, 3);
  const auto nl = build_neighbors_cells(x, 1.5);
  EXPECT_GE(nl.num_edges(), 300 * 20);
}
