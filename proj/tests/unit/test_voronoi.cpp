#include <gtest/gtest.h>

#include <vector>

#include "wrlab/intensity.hpp"
#include "wrlab/voronoi.hpp"

using namespace wrlab;

namespace {

std::vector<Point<2>> poisson_germs(const Window<2>& region, double rho, Rng& rng) {
  std::vector<Point<2>> g;
  const auto n = rng.poisson(rho * region.volume());
  for (std::uint64_t i = 0; i < n; ++i) {
    g.push_back({rng.uniform(region.lower[0], region.upper[0]), rng.uniform(region.lower[1], region.upper[1])});
  }
  return g;
}

// Number of cell boundaries crossed by the segment y = y0, x ∈ [x0, x1],
// found by walking from nearest germ to nearest germ along the line.
std::size_t transect_crossings(const std::vector<Point<2>>& germs, double y0, double x0, double x1) {
  std::size_t g = 0;
  double best = 1e300;
  for (std::size_t i = 0; i < germs.size(); ++i) {
    const double d = distance2(germs[i], Point<2>{x0, y0});
    if (d < best) {
      best = d;
      g = i;
    }
  }
  double x = x0;
  std::size_t count = 0;
  while (true) {
    double next = x1;
    std::size_t who = g;
    const auto& G = germs[g];
    for (std::size_t h = 0; h < germs.size(); ++h) {
      const auto& H = germs[h];
      if (H[0] <= G[0]) continue;
      const double t = ((H[0] * H[0] + H[1] * H[1]) - (G[0] * G[0] + G[1] * G[1]) - 2 * y0 * (H[1] - G[1])) /
                       (2 * (H[0] - G[0]));
      if (t > x && t < next) {
        next = t;
        who = h;
      }
    }
    if (who == g) return count;
    ++count;
    x = next;
    g = who;
  }
}

}  // namespace

TEST(ClipSegment, LiangBarsky) {
  const auto box = Window<2>::cube(0, 1);
  const auto c = clip_segment<2>({-1, 0.5}, {2, 0.5}, box);
  ASSERT_TRUE(c);
  EXPECT_DOUBLE_EQ(c->first[0], 0.0);
  EXPECT_DOUBLE_EQ(c->second[0], 1.0);
  EXPECT_FALSE(clip_segment<2>({-1, 2}, {2, 2}, box));
  EXPECT_FALSE(clip_segment<2>({2, 0}, {3, 1}, box));
}

TEST(Voronoi, EdgesLieOnBisectorsOfTheirGerms) {
  Rng rng(41);
  const auto region = Window<2>::cube(-4, 14);
  const auto window = Window<2>::cube(0, 10);
  const auto germs = poisson_germs(region, 1.0, rng);
  const auto vw = voronoi_edges_in_window(germs, window, region);
  EXPECT_TRUE(vw.complete);
  ASSERT_GT(vw.edges.size(), 50u);
  for (const auto& e : vw.edges) {
    Point<2> mid = {0.5 * (e.a[0] + e.b[0]), 0.5 * (e.a[1] + e.b[1])};
    for (const auto& y : {e.a, e.b, mid}) {
      const double dp = std::sqrt(distance2(y, e.germ_p));
      const double dq = std::sqrt(distance2(y, e.germ_q));
      EXPECT_NEAR(dp, dq, 1e-9);
    }
    // the two germs are nearest at the midpoint
    double nearest = 1e300;
    for (const auto& g : vw.germs) nearest = std::min(nearest, std::sqrt(distance2(mid, g)));
    EXPECT_NEAR(std::sqrt(distance2(mid, e.germ_p)), nearest, 1e-9);
    EXPECT_TRUE(window.contains(e.a) && window.contains(e.b));
  }
}

TEST(Voronoi, IncompleteWhenGermRegionIsTooSmall) {
  Rng rng(3);
  const auto window = Window<2>::cube(0, 10);
  const auto region = Window<2>::cube(-0.01, 10.01);
  const auto germs = poisson_germs(region, 0.3, rng);
  EXPECT_FALSE(voronoi_edges_in_window(germs, window, region).complete);
}

TEST(Voronoi, EdgeLengthDensityAgainstTransectOracle) {
  // Library side: Σ(W)/|W| from the realized environment, at two intensities.
  // Oracle side: independent transects through brute-force nearest germs,
  // L_A = (π/2) · crossings per unit length.
  for (double rho : {1.0, 4.0}) {
    const auto window = Window<2>::cube(0, 8);
    std::vector<double> lib;
    std::vector<double> oracle;
    Rng rng(1000 + Seed(rho));
    for (Seed s = 0; s < 120; ++s) {
      const auto env = realize_environment<2>(VoronoiEdges{rho}, window, 4.0 / std::sqrt(rho), s);
      lib.push_back(total_mass(env, window) / window.volume());
      const auto region = Window<2>::cube(-5, 13);
      const auto germs = poisson_germs(region, rho, rng);
      const double y0 = rng.uniform(0, 8);
      oracle.push_back(std::numbers::pi / 2 * double(transect_crossings(germs, y0, 0, 8)) / 8.0);
    }
    const auto a = summarize_replicates(lib);
    const auto b = summarize_replicates(oracle);
    const double expected = 2 * std::sqrt(rho);
    EXPECT_LE(std::abs(a.value - expected), 3 * a.std_error) << "rho " << rho << " library " << a.value;
    EXPECT_LE(std::abs(b.value - expected), 3 * b.std_error) << "rho " << rho << " transect " << b.value;
    EXPECT_LE(discrepancy_in_sigmas(a, b), 3.0);
  }
}

TEST(Voronoi, RealizationSegmentsCarryTheirGerms) {
  const auto window = Window<2>::cube(0, 6);
  const auto env = realize_environment<2>(VoronoiEdges{2.0}, window, 3.0, 8);
  ASSERT_NE(env.segment_measure(), nullptr);
  for (const auto& s : env.segment_measure()->segments) {
    ASSERT_TRUE(s.sources);
    const auto& [p, q] = *s.sources;
    EXPECT_NEAR(std::sqrt(distance2(s.a, p)), std::sqrt(distance2(s.a, q)), 1e-9);
    EXPECT_NEAR(std::sqrt(distance2(s.b, p)), std::sqrt(distance2(s.b, q)), 1e-9);
  }
}
