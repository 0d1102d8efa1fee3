#include <gtest/gtest.h>

#include "phdyn/basins.hpp"
#include "phdyn/systems.hpp"

using namespace phdyn;

namespace {

BasinMap<3> synthetic(const std::vector<std::vector<double>>& values, const std::vector<bool>& conv) {
  BasinMap<3> m;
  m.nx = static_cast<int>(values.size());
  m.ny = 1;
  for (std::size_t i = 0; i < values.size(); ++i) {
    BirkhoffVector v;
    v.value = values[i];
    v.half = values[i];
    v.converged = conv[i];
    m.vectors.push_back(v);
    m.points.push_back(TorusPoint<3>());
  }
  return m;
}

}  // namespace

TEST(Clustering, SeparatedGroupsAndFirstAppearanceLabels) {
  auto m = synthetic({{0.9, 0.0}, {0.1, 0.0}, {0.11, 0.01}, {0.91, 0.0}, {0.5, 0.5}},
                     {true, true, true, true, false});
  cluster_basins<3>(m, 0.05);
  EXPECT_EQ(m.ell, 2);
  EXPECT_EQ(m.labels, (std::vector<int>{1, 2, 2, 1, 0}));
  EXPECT_NEAR(m.centroids[1][0], 0.105, 1e-15);
}

TEST(Clustering, SingleLinkageChains) {
  // Consecutive members are within tol although the ends are not.
  auto m = synthetic({{0.0}, {0.04}, {0.08}, {0.12}}, {true, true, true, true});
  cluster_basins<3>(m, 0.05);
  EXPECT_EQ(m.ell, 1);
}

TEST(Clustering, MaxNormUsesEveryComponent) {
  auto m = synthetic({{0.0, 0.0}, {0.0, 0.2}}, {true, true});
  cluster_basins<3>(m, 0.05);
  EXPECT_EQ(m.ell, 2);
  BirkhoffVector probe;
  probe.value = {0.01, 0.19};
  probe.converged = true;
  EXPECT_EQ(classify<3>(m, probe), 2);
  probe.converged = false;
  EXPECT_EQ(classify<3>(m, probe), 0);
}

TEST(Clustering, ToleranceMustExceedConvergenceGate) {
  auto m = synthetic({{0.0}}, {true});
  EXPECT_THROW(cluster_basins<3>(m, 0.01, 0.01), InvalidArgument);
}

TEST(Observables, CharactersAndBlockBumps) {
  const auto obs = ObservableSet<3>::with_blocks({{0.0, 0.5}, {0.5, 1.0}});
  EXPECT_EQ(obs.size(), 8u);
  std::vector<double> out(obs.size());
  obs.eval(TorusPoint<3>::wrap(Vec<3>(0.25, 0.0, 0.0), true), out.data());
  EXPECT_NEAR(out[6], 1.0, 1e-12);
  EXPECT_NEAR(out[7], 0.0, 1e-12);
}

TEST(Birkhoff, FixedPointConvergesImmediately) {
  const auto blk = make_surrogate_block(0.05);
  // (1/2, 0, 0) is fixed: fiber fixes x = 1/2 and the cat map fixes the origin.
  const auto v = birkhoff_vector<3>(*blk, TorusPoint<3>::wrap(Vec<3>(0.5, 0.0, 0.0), true), 100,
                                    ObservableSet<3>::characters());
  EXPECT_TRUE(v.converged);
  EXPECT_NEAR(v.value[1], -1.0, 1e-12);  // cos(2 pi / 2)
}

TEST(Basins, TwoGluedBlocksGiveTwoBasins) {
  const auto g = make_glued_equal(make_surrogate_block(0.05), 2);
  SliceGrid<3> grid;
  grid.nx = 12;
  grid.ny = 4;
  BasinOptions opt;
  opt.horizon = 20000;
  const auto map = compute_basins<3>(*g, grid, ObservableSet<3>::with_blocks(block_ranges(*g)), opt);
  EXPECT_EQ(map.ell, 2);
  // Basins are the two block intervals.
  for (std::size_t i = 0; i < map.points.size(); ++i)
    if (map.labels[i]) EXPECT_EQ(map.labels[i], map.points[i][0] < 0.5 ? 1 : 2);
}

TEST(Basins, SliceGridIsSeededAndJittered) {
  SliceGrid<3> a, b;
  a.nx = b.nx = a.ny = b.ny = 4;
  b.seed = 2;
  const auto pa = a.points(false), pa2 = a.points(false), pb = b.points(false);
  EXPECT_EQ(pa, pa2);
  EXPECT_NE(pa, pb);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_NEAR(pa[i][0], (static_cast<int>(i % 4) + 0.5) / 4, 0.25 / 4 + 1e-15);
    EXPECT_NEAR(pa[i][2], 0.5, 1e-3);
  }
}
