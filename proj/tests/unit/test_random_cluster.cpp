#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "wrlab/percolation.hpp"
#include "wrlab/random_cluster.hpp"
#include "wrlab/stats.hpp"

using namespace wrlab;

namespace {

WRParams<2> lebesgue_params(const Window<2>& w, double a, double z) {
  WRParams<2> p;
  p.a = a;
  p.z = z;
  p.window = w;
  p.env = realize_shared<2>(HomogeneousLebesgue{1.0}, w, 1.0, 0);
  return p;
}

MCMCSettings quick_settings(std::size_t sweeps, std::size_t burn_in, std::size_t thinning = 1) {
  MCMCSettings s;
  s.sweeps = sweeps;
  s.burn_in = burn_in;
  s.thinning = thinning;
  return s;
}

Configuration<2> random_configuration(const Window<2>& w, std::size_t max_n, Rng& rng) {
  std::vector<Point<2>> pts;
  const auto n = rng.below(max_n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    pts.push_back({rng.uniform(w.lower[0], w.upper[0]), rng.uniform(w.lower[1], w.upper[1])});
  }
  return Configuration<2>(pts);
}

std::size_t wired_count(const Configuration<2>& c, double a, const Window<2>& w) {
  return build_components(c, {a, true}, w).num_components_wired;
}

// Ratio estimator Σ f·w / Σ w with a delta-method standard error.
EstimateWithError ratio_estimate(const std::vector<double>& fw, const std::vector<double>& w) {
  const double n = double(w.size());
  const double mw = mean_of(w);
  const double r = mean_of(fw) / mw;
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += (fw[i] - r * w[i]) * (fw[i] - r * w[i]);
  EstimateWithError e;
  e.value = r;
  e.std_error = std::sqrt(s / (n - 1) / n) / mw;
  e.n = w.size();
  e.method = EstimateMethod::ReplicateVariance;
  return e;
}

}  // namespace

TEST(ComponentExponent, WorkedExamples) {
  const auto w = Window<2>::cube(0, 10);
  EXPECT_EQ(rc_component_exponent(Configuration<2>{}, 1.0, w), 0u);
  EXPECT_EQ(rc_component_exponent(Configuration<2>({{5, 5}}), 1.0, w), 1u);
  // within 2a of the boundary: joins the boundary component
  EXPECT_EQ(rc_component_exponent(Configuration<2>({{1.5, 5}}), 1.0, w), 0u);
  EXPECT_EQ(rc_component_exponent(Configuration<2>({{4, 4}, {7, 7}}), 1.0, w), 2u);
  EXPECT_EQ(rc_component_exponent(Configuration<2>({{4, 5}, {5.5, 5}}), 1.0, w), 1u);
}

TEST(ComponentExponent, InsertionChangeMatchesRecount) {
  const auto w = Window<2>::cube(0, 10);
  // isolated interior insertion: ΔC = +1, weight factor 2
  const Configuration<2> two({{3, 5}, {6.6, 5}});
  const DominationConfig unit{1.0, 1};
  EXPECT_DOUBLE_EQ(papangelou_ratio<2>({5, 7.5}, two, 1.0, w, unit), 2.0);
  // bridge between two interior components: ΔC = −1, weight factor 1/2
  EXPECT_DOUBLE_EQ(papangelou_ratio<2>({4.8, 5}, two, 1.0, w, unit), 0.5);
  EXPECT_EQ(wired_count(two.with({4.8, 5}), 1.0, w) + 1, wired_count(two, 1.0, w));
  // touching only the boundary: ΔC = 0
  EXPECT_DOUBLE_EQ(papangelou_ratio<2>({1, 1}, two, 1.0, w, unit), 1.0);
  // joining an interior component to the boundary: ΔC = −1
  EXPECT_DOUBLE_EQ(papangelou_ratio<2>({1.5, 5}, Configuration<2>({{3, 5}}), 1.0, w, unit), 0.5);

  Rng rng(31);
  for (int t = 0; t < 2000; ++t) {
    const auto c = random_configuration(w, 25, rng);
    const Point<2> x = {rng.uniform(0, 10), rng.uniform(0, 10)};
    const auto lab = build_components(c, {1.0, true}, w);
    const auto merged = detail::merged_components<2>(x, c.points(), lab, w);
    ASSERT_EQ(long(wired_count(c.with(x), 1.0, w)) - long(wired_count(c, 1.0, w)), 1 - long(merged));
  }
}

TEST(RcMetropolis, BirthDeathRatiosSatisfyDetailedBalance) {
  for (double mass : {0.25, 3.0, 40.0}) {
    for (const MoveMix& mix : {MoveMix{0.5, 0.5, 0.0}, MoveMix{0.4, 0.4, 0.2}, MoveMix{0.7, 0.3, 0.0}}) {
      for (int dc : {-3, -1, 0, 1}) {
        for (std::size_t n = 0; n < 20; ++n) {
          const double b = rc_birth_ratio(mass, n, dc, mix);
          const double d = rc_death_ratio(mass, n + 1, -dc, mix);
          EXPECT_NEAR(b * d, 1.0, 1e-12);
          EXPECT_NEAR(b, mass / double(n + 1) * std::pow(2.0, dc) * mix.death / mix.birth, 1e-12 * b);
        }
      }
    }
  }
}

TEST(RcChain, IncrementalLabelsMatchFullRecount) {
  const Window<2> delta({1, 1}, {3, 3});
  for (double z : {1.5, 5.0}) {
    const auto p = lebesgue_params(Window<2>::cube(0, 4), 0.35, z);
    RCChain<2> chain(p, quick_settings(100, 10));
    Rng rng(2);
    for (int i = 0; i < 3000; ++i) {
      chain.step(rng);
      const auto conf = chain.state();
      const auto lab = build_components(conf, {p.a, true}, p.window);
      ASSERT_EQ(chain.wired_components(), lab.num_components_wired);
      ASSERT_EQ(chain.boundary_connected(delta), boundary_connected_count(lab, conf, delta));
      const auto mine = chain.labeling();
      ASSERT_EQ(mine.num_components_free, lab.num_components_free);
      for (std::size_t a = 0; a < conf.size(); ++a) {
        ASSERT_EQ(mine.touches_boundary[mine.label_of[a]], lab.touches_boundary[lab.label_of[a]]);
        for (std::size_t b = a + 1; b < conf.size(); ++b) {
          ASSERT_EQ(mine.label_of[a] == mine.label_of[b], lab.label_of[a] == lab.label_of[b]);
        }
      }
    }
    EXPECT_GT(chain.counters().accepted_death, 100u);
  }
  // a nonempty initial state is labeled on construction
  const auto p = lebesgue_params(Window<2>::cube(0, 4), 0.35, 1.0);
  const Configuration<2> init({{2, 2}, {2.5, 2}, {0.3, 3}});
  RCChain<2> chain(p, quick_settings(100, 10), init);
  EXPECT_EQ(chain.wired_components(), build_components(init, {p.a, true}, p.window).num_components_wired);
}

TEST(RcChain, LargeRadiusCountIsPoisson) {
  // a ≥ diameter: C = 1 for every configuration, so the law is Poisson(zσ(Λ))
  const double m = 0.25;
  const auto p = lebesgue_params(Window<2>::cube(0, 1), 0.75, m);
  const auto settings = quick_settings(80000, 1000, 4);
  RCChain<2> chain(p, settings);
  Rng rng(7);
  std::vector<double> counts;
  std::vector<double> hist(4, 0.0);
  run_chain(chain, settings, rng, [&](const RCChain<2>& c, std::size_t) {
    counts.push_back(double(c.size()));
    hist[std::min<std::size_t>(c.size(), 3)] += 1;
  });
  const auto e = summarize_batch_means(counts, 20);
  EXPECT_LE(std::abs(e.value - m), 3 * e.std_error) << e.value;
  const double n = double(counts.size());
  const double p0 = std::exp(-m);
  const double p1 = m * p0;
  const double p2 = m * m / 2 * p0;
  EXPECT_NEAR(hist[0] / n, p0, 0.02);
  EXPECT_NEAR(hist[1] / n, p1, 0.02);
  EXPECT_NEAR(hist[2] / n, p2, 0.01);
}

TEST(RcChain, ImportanceSamplingOracle) {
  // E_RC[f] = E_Π[f·2^{C−1}] / E_Π[2^{C−1}] with Π Poisson of intensity zσ
  const auto p = lebesgue_params(Window<2>::cube(0, 2), 0.25, 1.0);
  const Window<2> delta({0.5, 0.5}, {1.5, 1.5});
  std::vector<double> wts;
  std::vector<double> fn;
  std::vector<double> fc;
  Rng rng(5);
  for (int i = 0; i < 60000; ++i) {
    const auto c = sample_poisson(*p.env, p.window, p.z, rng);
    const auto lab = build_components(c, {p.a, true}, p.window);
    const double w = std::ldexp(1.0, int(lab.num_components_wired) - 1);
    wts.push_back(w);
    fn.push_back(w * double(c.size()));
    fc.push_back(w * double(boundary_connected_count(lab, c, delta)));
  }
  const auto oracle_n = ratio_estimate(fn, wts);
  const auto oracle_c = ratio_estimate(fc, wts);

  const auto settings = quick_settings(30000, 1000);
  const auto chain_n =
      estimate_rc_functional<2>(p, settings, 4, 9, [](const RCChain<2>& c) { return double(c.size()); });
  const auto chain_c = estimate_boundary_connected<2>(p, delta, settings, 4, 10);
  EXPECT_LE(discrepancy_in_sigmas(oracle_n, chain_n), 3.0) << oracle_n.value << " vs " << chain_n.value;
  EXPECT_LE(discrepancy_in_sigmas(oracle_c, chain_c), 3.0) << oracle_c.value << " vs " << chain_c.value;
  // each isolated interior point doubles the weight: more points than Poisson(zσ)
  EXPECT_GT(oracle_n.value, 4.0);
}

TEST(RcChain, ColorDroppingAgreesWithDirectChain) {
  const auto p = lebesgue_params(Window<2>::cube(0, 3), 0.3, 1.0);
  const Window<2> delta({1, 1}, {2, 2});
  const auto settings = quick_settings(20000, 1000);
  std::vector<double> dropped_n;
  std::vector<double> dropped_c;
  for (Seed s = 0; s < 3; ++s) {
    for (const auto& c : sample_rc_by_color_dropping(p, settings, derive_seed(40, s))) {
      dropped_n.push_back(double(c.size()));
      dropped_c.push_back(double(boundary_connected_count(build_components(c, {p.a, true}, p.window), c, delta)));
    }
  }
  // three chains concatenated; batch boundaries fall on chain boundaries
  const auto dn = summarize_batch_means(dropped_n, 24);
  const auto dc = summarize_batch_means(dropped_c, 24);
  const auto rn = estimate_rc_functional<2>(p, settings, 3, 41, [](const RCChain<2>& c) { return double(c.size()); });
  const auto rc = estimate_boundary_connected<2>(p, delta, settings, 3, 42);
  EXPECT_LE(discrepancy_in_sigmas(dn, rn), 3.0) << dn.value << " vs " << rn.value;
  EXPECT_LE(discrepancy_in_sigmas(dc, rc), 3.0) << dc.value << " vs " << rc.value;
}

TEST(EsIdentity, ZeroActivityIsExact) {
  const auto p = lebesgue_params(Window<2>::cube(0, 4), 0.5, 0.0);
  const auto r = check_es_identity(p, Window<2>({1, 1}, {3, 3}), quick_settings(200, 20), 2, 1);
  EXPECT_EQ(r.psi.value, 0.0);
  EXPECT_EQ(r.n_hat.value, 0.0);
  EXPECT_EQ(r.sigmas, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(EsIdentity, LargeRadiusBothSidesEqualMass) {
  const double m = 0.25;
  const auto p = lebesgue_params(Window<2>::cube(0, 1), 0.75, m);
  const auto r = check_es_identity(p, p.window, quick_settings(20000, 500), 4, 8);
  EXPECT_TRUE(r.pass) << r.psi.value << " vs " << r.n_hat.value;
  EXPECT_LE(std::abs(r.psi.value - m), 3 * r.psi.std_error);
  EXPECT_LE(std::abs(r.n_hat.value - m), 3 * r.n_hat.std_error);
}

TEST(MergeBound, WithinPackingCaps) {
  EXPECT_EQ(merge_bound_cap(1), 3u);
  EXPECT_EQ(merge_bound_cap(2), 6u);
  EXPECT_THROW(merge_bound_cap(3), InvalidArgument);
  EXPECT_THROW(estimate_merge_bound(2, 0.5, 10, 1), InvalidArgument);
  const auto m1 = estimate_merge_bound(1, 0.5, 100000, 3);
  const auto m2 = estimate_merge_bound(2, 0.5, 100000, 3);
  EXPECT_LE(m1.observed, 3u);
  EXPECT_GE(m1.observed, 2u);
  EXPECT_LE(m2.observed, 6u);
  EXPECT_GE(m2.observed, 4u);
  EXPECT_EQ(m2.value(), std::min(m2.observed, m2.analytic_cap));
}

TEST(MergeBound, FarPointsMergeNothing) {
  const auto w = Window<2>::cube(-10, 10);
  const Configuration<2> far({{5, 5}, {-6, 4}, {7, -7}});
  const auto lab = build_components(far, {0.5, true}, w);
  EXPECT_EQ(detail::merged_components<2>({0, 0}, far.points(), lab, w), 0u);
}

TEST(Domination, TauValidationAndPapangelouFloor) {
  EXPECT_THROW((DominationConfig{0.5, 6}.validate()), InvalidArgument);
  EXPECT_NO_THROW((DominationConfig{std::ldexp(1.0, -6), 6}.validate()));
  const auto d = DominationConfig::from_merge_bound(MergeBound{5, 6, 100000});
  EXPECT_EQ(d.merge_bound, 5u);
  EXPECT_DOUBLE_EQ(d.tau, 1.0 / 64);

  // with τ ≤ 2^{-K} and K at the packing cap the RC Papangelou intensity
  // dominates τzσ everywhere
  const DominationConfig cap{std::ldexp(1.0, -6), 6};
  const auto w = Window<2>::cube(0, 5);
  Rng rng(11);
  for (int t = 0; t < 3000; ++t) {
    const auto c = random_configuration(w, 40, rng);
    const Point<2> x = {rng.uniform(0, 5), rng.uniform(0, 5)};
    ASSERT_GE(papangelou_ratio<2>(x, c, 0.5, w, cap), 1.0);
  }
}

TEST(Domination, StandardStatisticsAreIncreasing) {
  const auto w = Window<2>::cube(0, 6);
  const auto stats = standard_increasing_statistics(w, 0.5, Window<2>({2, 2}, {4, 4}));
  EXPECT_EQ(stats.size(), 1u + 4u + 2u);
  for (const auto& s : stats) EXPECT_EQ(spot_check_increasing(s, w, 3000, 4), 0u) << s.name;
  const IncreasingStatistic<2> decreasing{"minus_count", [](const Configuration<2>& c) { return -double(c.size()); }};
  EXPECT_GT(spot_check_increasing(decreasing, w, 100, 4), 0u);
}

TEST(Domination, ZeroActivityPassesExactly) {
  const auto p = lebesgue_params(Window<2>::cube(0, 4), 0.5, 0.0);
  const auto stats = standard_increasing_statistics(p.window, p.a, Window<2>({1, 1}, {3, 3}));
  const auto r = check_domination(p, DominationConfig{1.0 / 64, 6}, stats, quick_settings(200, 20), 2, 1);
  EXPECT_TRUE(r.pass);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.poisson.value, 0.0);
    EXPECT_EQ(row.random_cluster.value, 0.0);
  }
}

TEST(Domination, PoissonSideMatchesClosedFormAndRowsPass) {
  const auto p = lebesgue_params(Window<2>::cube(0, 6), 0.5, 1.5);
  const auto stats = standard_increasing_statistics(p.window, p.a, Window<2>({2, 2}, {4, 4}));
  const DominationConfig dom{1.0 / 64, 5};
  const auto r = check_domination(p, dom, stats, quick_settings(3000, 300), 3, 6);
  ASSERT_EQ(r.rows.size(), stats.size());
  const auto& total = r.rows[0];
  EXPECT_EQ(total.statistic, "total_count");
  EXPECT_LE(std::abs(total.poisson.value - dom.tau * p.z * 36.0), 3 * total.poisson.std_error);
  EXPECT_TRUE(r.pass);
  EXPECT_THROW(check_domination(p, DominationConfig{0.5, 5}, stats, quick_settings(3000, 300), 1, 6),
               InvalidArgument);
}
