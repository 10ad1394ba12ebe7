#include <gtest/gtest.h>

#include <vector>

#include "wrlab/percolation.hpp"

using namespace wrlab;

namespace {

PercolationScanRow synthetic_row(std::vector<double> z, std::vector<double> p) {
  PercolationScanRow r;
  r.z_grid = std::move(z);
  for (double v : p) r.crossing.push_back(exact_estimate(v));
  return r;
}

}  // namespace

TEST(LargestFraction, WorkedExamples) {
  const auto w = Window<2>::cube(0, 10);
  EXPECT_EQ(largest_component_fraction(Configuration<2>{}, 0.5, w), 0.0);
  EXPECT_EQ(largest_component_fraction(Configuration<2>({{5, 5}}), 0.5, w), 1.0);
  EXPECT_EQ(largest_component_fraction(Configuration<2>({{2, 2}, {8, 8}}), 0.5, w), 0.5);
  EXPECT_EQ(largest_component_fraction(Configuration<2>({{2, 2}, {2.9, 2}, {3.8, 2}, {8, 8}}), 0.5, w), 0.75);
}

TEST(TargetProxy, WorkedExamples) {
  const auto w = Window<2>::cube(0, 10);
  const Window<2> delta({4, 4}, {6, 6});
  const auto chain_to = [](double end) {
    std::vector<Point<2>> pts;
    for (double x = 0.5; x < end - 1e-9; x += 0.5) pts.push_back({x, 5});
    pts.push_back({end, 5});
    return Configuration<2>(pts);
  };
  EXPECT_FALSE(target_percolation_proxy(Configuration<2>{}, 0.5, w, delta));
  EXPECT_TRUE(target_percolation_proxy(chain_to(4.0), 0.5, w, delta));
  // the last ball reaches Δ exactly at distance a
  EXPECT_TRUE(target_percolation_proxy(chain_to(3.5), 0.5, w, delta));
  EXPECT_FALSE(target_percolation_proxy(chain_to(3.4), 0.5, w, delta));
  // a point in Δ that is not connected to the boundary
  EXPECT_FALSE(target_percolation_proxy(Configuration<2>({{5, 5}}), 0.5, w, delta));
  EXPECT_THROW(target_percolation_proxy(Configuration<2>{}, 0.5, w, Window<2>({8, 8}, {11, 11})), InvalidArgument);
}

TEST(CoupledScan, MatchesIndependentRecountAtEveryLevel) {
  // oracle: thin the top configuration at each level and label from scratch
  const auto w = Window<2>::cube(0, 6);
  const std::vector<double> grid = {0.2, 0.5, 0.8, 1.1, 1.4, 2.0};
  Rng rng(17);
  for (int trial = 0; trial < 150; ++trial) {
    std::vector<Point<2>> pts;
    const auto n = rng.poisson(2.0 * 36);
    for (std::uint64_t i = 0; i < n; ++i) pts.push_back({rng.uniform(0, 6), rng.uniform(0, 6)});
    const Configuration<2> top(pts);
    std::vector<double> labels(top.size());
    for (auto& u : labels) u = rng.uniform();
    for (bool both : {false, true}) {
      PercolationOptions opt;
      opt.both_axes = both;
      const auto out = detail::coupled_scan_replicate<2>(top, labels, 0.5, w, grid, opt);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        std::vector<Point<2>> kept;
        for (std::size_t i = 0; i < top.size(); ++i) {
          if (labels[i] < grid[g] / grid.back()) kept.push_back(top[i]);
        }
        const Configuration<2> thin(kept);
        const auto lab = build_components(thin, {0.5, false}, w);
        bool crosses = has_crossing(lab, thin, w, 0);
        if (both) crosses = crosses && has_crossing(lab, thin, w, 1);
        ASSERT_EQ(out.crosses_at(grid[g]), crosses) << "trial " << trial << " level " << g;
        if (!both) {
          ASSERT_DOUBLE_EQ(out.largest_fraction[g], largest_component_fraction(thin, 0.5, w));
        }
      }
    }
  }
}

TEST(CrossingScan, ZeroActivityNeverCrosses) {
  const auto row = estimate_crossing_probability<2>(HomogeneousLebesgue{1.0}, {0.0}, 0.5, 8, 20, 1);
  EXPECT_EQ(row.crossing[0].value, 0.0);
  EXPECT_EQ(row.largest_fraction[0].value, 0.0);
}

TEST(CrossingScan, ValidatesArguments) {
  const HomogeneousLebesgue leb{1.0};
  EXPECT_THROW(estimate_crossing_probability<2>(leb, {}, 0.5, 8, 10, 1), InvalidArgument);
  EXPECT_THROW(estimate_crossing_probability<2>(leb, {1.0, 0.5}, 0.5, 8, 10, 1), InvalidArgument);
  EXPECT_THROW(estimate_crossing_probability<2>(leb, {1.0}, 0.5, 2, 10, 1), InvalidArgument);
  EXPECT_THROW(estimate_crossing_probability<2>(leb, {1.0}, 0.5, 8, 0, 1), InvalidArgument);
}

TEST(CrossingScan, MonotoneInZPerSeedAndInRadius) {
  const std::vector<double> grid = {0.5, 1.0, 1.5, 2.0, 3.0};
  const auto row = estimate_crossing_probability<2>(HomogeneousLebesgue{1.0}, grid, 0.5, 12, 60, 3);
  for (const auto& rep : row.replicates) {
    for (std::size_t g = 1; g < grid.size(); ++g) EXPECT_LE(rep.crosses_at(grid[g - 1]), rep.crosses_at(grid[g]));
  }
  for (std::size_t g = 1; g < grid.size(); ++g) EXPECT_LE(row.crossing[g - 1].value, row.crossing[g].value);
  EXPECT_EQ(row.crossing.front().value, 0.0);
  EXPECT_EQ(row.crossing.back().value, 1.0);

  // the point process does not depend on a, so larger balls cross no later
  const auto wide = estimate_crossing_probability<2>(HomogeneousLebesgue{1.0}, grid, 0.6, 12, 60, 3);
  for (std::size_t r = 0; r < row.replicates.size(); ++r) {
    EXPECT_LE(wide.replicates[r].critical_level, row.replicates[r].critical_level);
  }
}

TEST(CrossingScan, CrossingFractionAgreesWithGrid) {
  const std::vector<double> grid = {1.0, 1.5, 2.0};
  const auto row = estimate_crossing_probability<2>(HomogeneousLebesgue{1.0}, grid, 0.5, 10, 40, 8);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    EXPECT_DOUBLE_EQ(crossing_fraction(row.replicates, grid[g]), row.crossing[g].value);
    EXPECT_LE(row.crossing[g].lo, row.crossing[g].value);
    EXPECT_GE(row.crossing[g].hi, row.crossing[g].value);
  }
}

TEST(Intersection, SignChangeByLinearInterpolation) {
  const auto small = synthetic_row({1, 2, 3, 4}, {0.2, 0.4, 0.6, 0.8});
  const auto large = synthetic_row({1, 2, 3, 4}, {0.1, 0.3, 0.7, 0.9});
  const auto z = crossing_curve_intersection(small, large);
  ASSERT_TRUE(z);
  EXPECT_DOUBLE_EQ(*z, 2.5);
  // no crossing of the curves
  EXPECT_FALSE(crossing_curve_intersection(small, synthetic_row({1, 2, 3, 4}, {0.0, 0.1, 0.2, 0.3})));
  EXPECT_THROW(crossing_curve_intersection(small, synthetic_row({1, 2, 3}, {0, 0, 0})), InvalidArgument);
}

TEST(CriticalIntensity, ReproducibleAcrossSeeds) {
  CriticalSearchOptions opt;
  opt.z_hi = 4.0;
  opt.replicates = 200;
  const HomogeneousLebesgue leb{1.0};
  const auto a = estimate_critical_intensity<2>(leb, 0.5, 32, 0.5, 0.01, 101, opt);
  const auto b = estimate_critical_intensity<2>(leb, 0.5, 32, 0.5, 0.01, 202, opt);
  EXPECT_GT(a.std_error, 0.0);
  EXPECT_LE(discrepancy_in_sigmas(a, b), 3.0) << a.value << " ± " << a.std_error << " vs " << b.value;
  // the disk threshold (2a)²·z_c ≈ 1.436 for unit-diameter disks
  EXPECT_NEAR(a.value, 1.436, 0.15);
}

TEST(CriticalIntensity, NonBracketingIntervalThrows) {
  CriticalSearchOptions opt;
  opt.z_hi = 0.2;
  opt.replicates = 40;
  EXPECT_THROW(estimate_critical_intensity<2>(HomogeneousLebesgue{1.0}, 0.5, 12, 0.5, 0.01, 1, opt),
               InvalidArgument);
  EXPECT_THROW(estimate_critical_intensity<2>(HomogeneousLebesgue{1.0}, 0.5, 12, 1.0, 0.01, 1, opt),
               InvalidArgument);
}

TEST(CriticalIntensity, VoronoiThresholdDecreasesWithRadius) {
  CriticalSearchOptions opt;
  opt.z_hi = 40.0;
  opt.replicates = 100;
  double previous = std::numeric_limits<double>::infinity();
  for (double a : {0.25, 0.5, 1.0}) {
    const auto e = estimate_critical_intensity<2>(VoronoiEdges{1.0}, a, 12, 0.5, 0.02, 5, opt);
    EXPECT_TRUE(std::isfinite(e.value));
    EXPECT_LT(e.value, previous) << "a = " << a;
    previous = e.value;
  }
}
