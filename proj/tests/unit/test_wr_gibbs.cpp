#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "wrlab/stats.hpp"
#include "wrlab/wr_gibbs.hpp"

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

MarkedConfiguration<2> marked(std::vector<MarkedPoint<2>> pts) { return MarkedConfiguration<2>(std::move(pts)); }

MCMCSettings quick_settings(std::size_t sweeps, std::size_t burn_in, std::size_t thinning = 1) {
  MCMCSettings s;
  s.sweeps = sweeps;
  s.burn_in = burn_in;
  s.thinning = thinning;
  return s;
}

// Unit square with a = 0.75: 2a = 1.5 exceeds the diameter √2, so every pair
// of points overlaps and every point is within 2a of the boundary. With
// m = zσ(Λ) the proposal count is Poisson(2m) and a proposal with n points is
// viable with probability w(n): 2^{1-n} (n ≥ 1) for Free, 2^{-n} for
// PlusWired.
constexpr double kBigA = 0.75;
constexpr double kM = 0.25;

double proposal_pmf(std::size_t n, double m) {
  return std::exp(-2 * m + double(n) * std::log(2 * m) - std::lgamma(double(n) + 1));
}

double viable_weight(std::size_t n, BoundaryCondition b) {
  if (b == BoundaryCondition::Free) return n == 0 ? 1.0 : std::ldexp(1.0, 1 - int(n));
  return std::ldexp(1.0, -int(n));
}

double acceptance_by_sum(BoundaryCondition b) {
  double s = 0;
  for (std::size_t n = 0; n < 60; ++n) s += proposal_pmf(n, kM) * viable_weight(n, b);
  return s;
}

double total_variation(const std::map<std::pair<int, int>, double>& p, const std::map<std::pair<int, int>, double>& q) {
  std::map<std::pair<int, int>, double> all;
  for (const auto& [k, v] : p) all[k] += v;
  for (const auto& [k, v] : q) all[k] -= v;
  double tv = 0;
  for (const auto& [k, v] : all) tv += std::abs(v);
  return 0.5 * tv;
}

std::pair<int, int> color_counts(std::span<const MarkedPoint<2>> pts) {
  int plus = 0;
  int minus = 0;
  for (const auto& p : pts) (p.color == Color::Plus ? plus : minus)++;
  return {std::min(plus, 8), std::min(minus, 8)};
}

}  // namespace

TEST(Viability, WorkedExamples) {
  const auto w = Window<2>::cube(0, 10);
  EXPECT_TRUE(is_viable(MarkedConfiguration<2>{}, 1.0, BoundaryCondition::Free, w));
  EXPECT_TRUE(is_viable(MarkedConfiguration<2>{}, 1.0, BoundaryCondition::PlusWired, w));
  // opposite colors at distance 1.5 < 2a = 2
  const auto clash = marked({{{5, 5}, Color::Plus}, {{6.5, 5}, Color::Minus}});
  EXPECT_FALSE(is_viable(clash, 1.0, BoundaryCondition::Free, w));
  // equal colors may overlap
  EXPECT_TRUE(is_viable(marked({{{5, 5}, Color::Plus}, {{6.5, 5}, Color::Plus}}), 1.0, BoundaryCondition::Free, w));
  // contact at exactly 2a counts as overlap for closed balls
  EXPECT_FALSE(is_viable(marked({{{4, 5}, Color::Plus}, {{6, 5}, Color::Minus}}), 1.0, BoundaryCondition::Free, w));
  // a lone minus point at distance 1 from ∂Λ is excluded under plus-wired
  const auto lone = marked({{{1, 5}, Color::Minus}});
  EXPECT_FALSE(is_viable(lone, 1.0, BoundaryCondition::PlusWired, w));
  EXPECT_TRUE(is_viable(lone, 1.0, BoundaryCondition::Free, w));
  EXPECT_TRUE(is_viable(lone, 1.0, BoundaryCondition::MinusWired, w));
  EXPECT_TRUE(is_viable(marked({{{5, 5}, Color::Minus}}), 1.0, BoundaryCondition::PlusWired, w));
  EXPECT_THROW(is_viable(marked({{{11, 5}, Color::Minus}}), 1.0, BoundaryCondition::Free, w), InvalidArgument);
}

TEST(Viability, MonotoneUnderRemovalAndColorSwapEquivariant) {
  const auto w = Window<2>::cube(0, 4);
  Rng rng(5);
  for (int trial = 0; trial < 400; ++trial) {
    std::vector<MarkedPoint<2>> pts;
    const auto n = rng.below(9);
    for (std::size_t i = 0; i < n; ++i) {
      pts.push_back({{rng.uniform(0, 4), rng.uniform(0, 4)}, rng.bernoulli(0.5) ? Color::Plus : Color::Minus});
    }
    const auto conf = marked(pts);
    for (auto b : {BoundaryCondition::Free, BoundaryCondition::PlusWired, BoundaryCondition::MinusWired}) {
      const bool v = is_viable(conf, 0.4, b, w);
      EXPECT_EQ(v, is_viable(conf.flipped(), 0.4, swapped(b), w));
      if (v && !pts.empty()) {
        auto fewer = pts;
        fewer.erase(fewer.begin() + long(rng.below(fewer.size())));
        EXPECT_TRUE(is_viable(marked(fewer), 0.4, b, w));
      }
      // brute force
      bool brute = true;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto banned = excluded_near_boundary(b);
        if (banned && pts[i].color == *banned && w.distance_to_boundary(pts[i].position) <= 0.8) brute = false;
        for (std::size_t j = 0; j < i; ++j) {
          if (pts[i].color != pts[j].color && std::sqrt(distance2(pts[i].position, pts[j].position)) <= 0.8) {
            brute = false;
          }
        }
      }
      EXPECT_EQ(v, brute);
    }
  }
}

TEST(Rejection, ZeroActivityGivesEmptyInOneAttempt) {
  const auto p = lebesgue_params(Window<2>::cube(0, 3), 0.5, 0.0);
  Rng rng(1);
  RejectionTrace t;
  EXPECT_TRUE(sample_wr_rejection(p, BoundaryCondition::PlusWired, rng, 10, &t).empty());
  EXPECT_EQ(t.attempts, 1u);
}

TEST(Rejection, AcceptanceMatchesFiniteSumOracle) {
  // closed forms of the finite sums: e^{-2m}(2e^m − 1) and e^{-m}
  EXPECT_NEAR(acceptance_by_sum(BoundaryCondition::Free), std::exp(-2 * kM) * (2 * std::exp(kM) - 1), 1e-14);
  EXPECT_NEAR(acceptance_by_sum(BoundaryCondition::PlusWired), std::exp(-kM), 1e-14);

  const auto p = lebesgue_params(Window<2>::cube(0, 1), kBigA, kM);
  for (auto b : {BoundaryCondition::Free, BoundaryCondition::PlusWired}) {
    Rng rng(99);
    std::uint64_t attempts = 0;
    std::size_t accepted = 0;
    std::map<std::size_t, double> hist;
    while (attempts < 100000) {
      RejectionTrace t;
      const auto s = sample_wr_rejection(p, b, rng, 1000, &t);
      attempts += t.attempts;
      ++accepted;
      hist[std::min<std::size_t>(s.size(), 5)] += 1;
      if (b == BoundaryCondition::PlusWired) {
        for (const auto& q : s) ASSERT_EQ(q.color, Color::Plus);
      }
    }
    const double expected = acceptance_by_sum(b);
    const double rate = double(accepted) / double(attempts);
    EXPECT_LE(std::abs(rate - expected), 3 * std::sqrt(expected * (1 - expected) / double(attempts)))
        << "rate " << rate << " oracle " << expected;

    // accepted count law ∝ pmf(n)·w(n); chi-square over n = 0..4, 5+
    double chi2 = 0;
    double tail = 1;
    for (std::size_t n = 0; n <= 5; ++n) {
      const double pn = n < 5 ? proposal_pmf(n, kM) * viable_weight(n, b) / expected : tail;
      if (n < 5) tail -= pn;
      const double e = pn * double(accepted);
      if (e < 5) continue;
      chi2 += (hist[n] - e) * (hist[n] - e) / e;
    }
    // 3 degrees of freedom or fewer; 16.27 is the 0.1% point for 3
    EXPECT_LT(chi2, 16.27);
  }
}

TEST(Rejection, FreeBoundaryIsColorSymmetric) {
  const auto p = lebesgue_params(Window<2>::cube(0, 3), 0.3, 0.6);
  Rng rng(12);
  std::vector<double> imbalance;
  for (int i = 0; i < 4000; ++i) {
    const auto s = sample_wr_rejection(p, BoundaryCondition::Free, rng, 100000);
    imbalance.push_back(double(s.count(Color::Plus, p.window)) - double(s.count(Color::Minus, p.window)));
  }
  const auto e = summarize_replicates(imbalance);
  EXPECT_LE(std::abs(e.value), 3 * e.std_error);
}

TEST(Metropolis, BirthDeathRatiosSatisfyDetailedBalance) {
  // For ω and ω ∪ {x}, π(ω ∪ x)q(ω ∪ x → ω) / π(ω)q(ω → ω ∪ x) is the birth
  // ratio; the death ratio from n + 1 must be its reciprocal.
  for (double mass : {0.3, 4.0, 17.5}) {
    for (const MoveMix& mix : {MoveMix{0.4, 0.4, 0.2}, MoveMix{0.5, 0.25, 0.25}, MoveMix{0.1, 0.8, 0.1}}) {
      for (std::size_t n = 0; n < 30; ++n) {
        const double b = wr_birth_ratio(mass, n, mix);
        const double d = wr_death_ratio(mass, n + 1, mix);
        EXPECT_NEAR(b * d, 1.0, 1e-12);
        EXPECT_NEAR(std::min(1.0, b) / std::min(1.0, d), b, 1e-12 * std::max(1.0, b));
        EXPECT_NEAR(b, mass / double(n + 1) * mix.death / mix.birth, 1e-12 * b);
      }
    }
  }
}

TEST(Chain, RejectsBadSettingsAndStates) {
  const auto p = lebesgue_params(Window<2>::cube(0, 4), 0.5, 1.0);
  MCMCSettings s = quick_settings(100, 10);
  s.move_mix = {0.5, 0.5, 0.5};
  EXPECT_THROW(WRChain<2>(p, BoundaryCondition::Free, s), InvalidArgument);
  s = quick_settings(10, 10);
  EXPECT_THROW(WRChain<2>(p, BoundaryCondition::Free, s), InvalidArgument);
  s = quick_settings(100, 10);
  s.move_mix = {0.0, 0.8, 0.2};
  EXPECT_THROW(WRChain<2>(p, BoundaryCondition::Free, s), InvalidArgument);
  const auto bad = marked({{{1, 1}, Color::Plus}, {{1.5, 1}, Color::Minus}});
  EXPECT_THROW(WRChain<2>(p, BoundaryCondition::Free, quick_settings(100, 10), bad), InvalidArgument);
  Rng rng(1);
  EXPECT_THROW(step_wr_mcmc(bad, p, BoundaryCondition::Free, quick_settings(100, 10), rng), InvalidArgument);
}

TEST(Chain, EveryStateIsViableAndForbiddenBirthsAreRefused) {
  // a ≥ diameter: under plus-wired every minus birth violates viability, so a
  // minus point must never appear.
  {
    const auto p = lebesgue_params(Window<2>::cube(0, 1), kBigA, 2.0);
    WRChain<2> chain(p, BoundaryCondition::PlusWired, quick_settings(100, 10));
    Rng rng(4);
    for (int i = 0; i < 20000; ++i) {
      chain.step(rng);
      ASSERT_EQ(chain.count(Color::Minus, p.window), 0u);
    }
    EXPECT_GT(chain.counters().accepted_birth, 0u);
    EXPECT_LT(chain.counters().accepted_birth, chain.counters().proposed_birth);
  }
  {
    const auto p = lebesgue_params(Window<2>::cube(0, 3), 0.35, 1.5);
    for (auto b : {BoundaryCondition::Free, BoundaryCondition::PlusWired, BoundaryCondition::MinusWired}) {
      WRChain<2> chain(p, b, quick_settings(100, 10));
      Rng rng(6);
      for (int i = 0; i < 3000; ++i) {
        chain.step(rng);
        ASSERT_TRUE(is_viable(chain.state(), p.a, b, p.window));
      }
      EXPECT_GT(chain.counters().accepted_recolor, 0u);
    }
  }
}

TEST(Chain, StepFunctionAgreesWithChain) {
  const auto p = lebesgue_params(Window<2>::cube(0, 3), 0.35, 1.5);
  const auto settings = quick_settings(100, 10);
  WRChain<2> chain(p, BoundaryCondition::Free, settings);
  Rng r1(8);
  for (int i = 0; i < 50; ++i) chain.step(r1);
  const auto s0 = chain.state();
  Rng r2(77);
  Rng r3(77);
  const auto via_fn = step_wr_mcmc(s0, p, BoundaryCondition::Free, settings, r2);
  WRChain<2> copy(p, BoundaryCondition::Free, settings, s0);
  copy.step(r3);
  EXPECT_EQ(std::vector<MarkedPoint<2>>(via_fn.begin(), via_fn.end()),
            std::vector<MarkedPoint<2>>(copy.points().begin(), copy.points().end()));
}

TEST(Chain, MatchesRejectionSamplerInTotalVariation) {
  const auto p = lebesgue_params(Window<2>::cube(0, 2), 0.3, 0.5);
  const auto b = BoundaryCondition::PlusWired;
  const std::size_t n = 10000;

  std::map<std::pair<int, int>, double> exact;
  Rng rng(21);
  for (std::size_t i = 0; i < n; ++i) exact[color_counts(sample_wr_rejection(p, b, rng, 1000000).points())] += 1.0 / n;

  std::map<std::pair<int, int>, double> chain_hist;
  const auto settings = quick_settings(500 + 5 * n, 500, 5);
  WRChain<2> chain(p, b, settings);
  Rng crng(22);
  run_chain(chain, settings, crng, [&](const WRChain<2>& c, std::size_t) { chain_hist[color_counts(c.points())] += 1.0 / n; });
  EXPECT_LE(total_variation(exact, chain_hist), 0.05);
}

TEST(OrderParameter, ZeroActivityIsExactlyZero) {
  const auto p = lebesgue_params(Window<2>::cube(0, 4), 0.5, 0.0);
  const auto e = estimate_order_parameter(p, Window<2>({1, 1}, {3, 3}), quick_settings(200, 20), 2, 1);
  EXPECT_EQ(e.value, 0.0);
  EXPECT_EQ(e.std_error, 0.0);
}

TEST(OrderParameter, LargeRadiusOracle) {
  // plus-wired with a ≥ diameter: a Poisson(m) cloud of plus points, Ψ = m
  const auto p = lebesgue_params(Window<2>::cube(0, 1), kBigA, kM);
  const auto e = estimate_order_parameter(p, p.window, quick_settings(20000, 500), 4, 3);
  EXPECT_LE(std::abs(e.value - kM), 3 * e.std_error) << e.value << " ± " << e.std_error;
  EXPECT_GT(e.std_error, 0.0);
  // Free boundary: colors are symmetric
  const auto f = estimate_color_imbalance(p, BoundaryCondition::Free, p.window, quick_settings(20000, 500), 4, 3);
  EXPECT_LE(std::abs(f.value), 3 * f.std_error);
}

TEST(OrderParameter, SingleAndTwoChainFormsAgree) {
  const auto p = lebesgue_params(Window<2>::cube(0, 3), 0.4, 1.0);
  const Window<2> delta({1, 1}, {2, 2});
  const auto settings = quick_settings(6000, 500);
  const auto one = estimate_order_parameter(p, delta, settings, 4, 10);
  const auto two = estimate_order_parameter_two_chain(p, delta, settings, 4, 11);
  EXPECT_LE(discrepancy_in_sigmas(one, two), 3.0) << one.value << " vs " << two.value;
  EXPECT_THROW(estimate_order_parameter(p, Window<2>({2, 2}, {4, 4}), settings, 1, 1), InvalidArgument);
}

TEST(Dlr, ZeroActivityIsTriviallyConsistent) {
  const auto p = lebesgue_params(Window<2>::cube(0, 4), 0.3, 0.0);
  const auto r = dlr_consistency_check(p, BoundaryCondition::PlusWired, Window<2>({1.5, 1.5}, {2.5, 2.5}),
                                       quick_settings(200, 20), 1);
  EXPECT_FALSE(r.rejected);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(Dlr, CorrectChainIsNotRejected) {
  const auto p = lebesgue_params(Window<2>::cube(0, 4), 0.3, 1.0);
  const auto r = dlr_consistency_check(p, BoundaryCondition::PlusWired, Window<2>({1.5, 1.5}, {2.5, 2.5}),
                                       quick_settings(4000, 400), 5);
  EXPECT_FALSE(r.rejected) << "p = " << r.p_value;
  EXPECT_EQ(r.statistics.size(), 3u);
  EXPECT_GE(r.resample_attempts, r.samples);
}

TEST(Dlr, ResampleKeepsOutsideAndStaysViable) {
  const auto p = lebesgue_params(Window<2>::cube(0, 4), 0.3, 1.0);
  const Window<2> delta({1.5, 1.5}, {2.5, 2.5});
  WRChain<2> chain(p, BoundaryCondition::PlusWired, quick_settings(100, 10));
  Rng rng(3);
  for (int i = 0; i < 500; ++i) chain.step(rng);
  std::vector<MarkedPoint<2>> pts(chain.points().begin(), chain.points().end());
  std::vector<MarkedPoint<2>> outside_before;
  for (const auto& q : pts) {
    if (!delta.contains(q.position)) outside_before.push_back(q);
  }
  for (int k = 0; k < 50; ++k) {
    resample_inside(pts, p, BoundaryCondition::PlusWired, delta, rng, 100000);
    ASSERT_TRUE(is_viable(marked(pts), p.a, BoundaryCondition::PlusWired, p.window));
    std::vector<MarkedPoint<2>> outside_after;
    for (const auto& q : pts) {
      if (!delta.contains(q.position)) outside_after.push_back(q);
    }
    ASSERT_EQ(outside_before, outside_after);
  }
}

TEST(Chain, BirthRateMultiplierTargetsScaledActivity) {
  // plus-wired with a ≥ diameter: counts are Poisson(zσ(Λ)), so a multiplier
  // of 3 should move the mean to 3m
  const auto p = lebesgue_params(Window<2>::cube(0, 1), kBigA, kM);
  auto s = quick_settings(40000, 1000);
  s.birth_rate_multiplier = 3.0;
  const auto e = estimate_wr_functional(p, BoundaryCondition::PlusWired, s, 4, 8,
                                        [](const WRChain<2>& c) { return double(c.size()); });
  EXPECT_LE(std::abs(e.value - 3 * kM), 3 * e.std_error) << e.value << " ± " << e.std_error;
}

TEST(Dlr, CorruptedKernelIsRejected) {
  const auto p = lebesgue_params(Window<2>::cube(0, 4), 0.3, 1.0);
  auto s = quick_settings(4000, 400);
  s.birth_rate_multiplier = 2.0;
  const auto r = dlr_consistency_check(p, BoundaryCondition::PlusWired, Window<2>({1.5, 1.5}, {2.5, 2.5}), s, 5);
  EXPECT_TRUE(r.rejected) << "p = " << r.p_value;
}
