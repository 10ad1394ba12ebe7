#pragma once

// Finite-window percolation proxies for Boolean models: side-to-side
// crossing, largest-component fraction, and Δ-to-boundary reach. Scans over z
// use one Poisson draw at the largest z per replicate, thinned with one
// uniform label per point, so every indicator is monotone in z per replicate.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "wrlab/geometry.hpp"
#include "wrlab/intensity.hpp"
#include "wrlab/rng.hpp"
#include "wrlab/stats.hpp"

namespace wrlab {

/// Size of the largest free component over the number of points (0 if empty).
template <std::size_t D>
double largest_component_fraction(const Configuration<D>& conf, double a, const Window<D>& window) {
  if (conf.empty()) return 0.0;
  const auto lab = build_components(conf, {a, false}, window);
  const auto largest = *std::max_element(lab.component_size.begin(), lab.component_size.end());
  return double(largest) / double(conf.size());
}

/// Some component has a point whose a-ball meets Δ and a point within 2a of ∂Λ.
template <std::size_t D>
bool target_percolation_proxy(const Configuration<D>& conf, double a, const Window<D>& window,
                              const Window<D>& delta) {
  if (!window.contains(delta)) throw InvalidArgument("delta must lie inside the window");
  if (conf.empty()) return false;
  const auto lab = build_components(conf, {a, true}, window);
  for (std::size_t i = 0; i < conf.size(); ++i) {
    if (lab.touches_boundary[lab.label_of[i]] && delta.distance_to(conf[i]) <= a) return true;
  }
  return false;
}

struct PercolationOptions {
  /// Require crossings along both axes 0 and 1 instead of axis 0 only.
  bool both_axes = false;
  /// Guard margin for environment realization; 0 selects the model default.
  double guard_margin = 0.0;
};

/// Per-replicate outcome of a coupled scan.
struct ReplicateOutcome {
  /// Smallest thinning level u* at which the crossing event holds; the event
  /// holds at z iff u* < z / z_max. +inf if it never holds at z_max.
  double critical_level = std::numeric_limits<double>::infinity();
  double z_max = 0.0;
  std::vector<double> largest_fraction;

  double critical_z() const { return critical_level * z_max; }
  bool crosses_at(double z) const { return z_max > 0.0 && critical_level < z / z_max; }
};

struct PercolationScanRow {
  std::string environment;
  double L = 0.0;
  std::vector<double> z_grid;
  std::vector<EstimateWithError> crossing;
  std::vector<EstimateWithError> largest_fraction;
  std::vector<ReplicateOutcome> replicates;
};

namespace detail {

inline void validate_z_grid(const std::vector<double>& z_grid) {
  if (z_grid.empty()) throw InvalidArgument("z grid is empty");
  for (std::size_t i = 0; i < z_grid.size(); ++i) {
    if (!(z_grid[i] >= 0.0) || !std::isfinite(z_grid[i])) throw InvalidArgument("z grid values must be nonnegative");
    if (i > 0 && !(z_grid[i] > z_grid[i - 1])) throw InvalidArgument("z grid must be strictly increasing");
  }
}

/// Adds points in order of their thinning label, tracking crossing flags and
/// the largest component.
template <std::size_t D>
ReplicateOutcome coupled_scan_replicate(const Configuration<D>& top, std::span<const double> labels, double a,
                                        const Window<D>& window, std::span<const double> z_grid,
                                        const PercolationOptions& opt) {
  ReplicateOutcome out;
  out.z_max = z_grid.back();
  out.largest_fraction.assign(z_grid.size(), 0.0);
  const std::size_t n = top.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return labels[i] < labels[j]; });

  const double reach = 2.0 * a;
  const double reach2 = reach * reach;
  DisjointSets sets(n);
  std::vector<std::uint8_t> flags(n, 0);
  CellGrid<D> grid(window, reach);
  std::size_t largest = 0;
  bool axis0 = false;
  bool axis1 = !opt.both_axes;
  const auto face_flags = [&](const Point<D>& p) {
    std::uint8_t f = 0;
    if (p[0] - window.lower[0] <= reach) f |= 1;
    if (window.upper[0] - p[0] <= reach) f |= 2;
    if constexpr (D > 1) {
      if (p[1] - window.lower[1] <= reach) f |= 4;
      if (window.upper[1] - p[1] <= reach) f |= 8;
    }
    return f;
  };

  std::size_t next = 0;
  for (std::size_t g = 0; g < z_grid.size(); ++g) {
    const double level = out.z_max > 0.0 ? z_grid[g] / out.z_max : 0.0;
    while (next < n && labels[order[next]] < level) {
      const std::size_t i = order[next++];
      const auto& p = top[i];
      std::uint8_t f = face_flags(p);
      grid.for_each_near(p, [&](std::uint32_t j) {
        if (distance2(p, top[j]) <= reach2) {
          f |= flags[sets.find(j)];
          sets.unite(i, j);
        }
      });
      const std::size_t root = sets.find(i);
      flags[root] |= f;
      largest = std::max(largest, sets.size_of(root));
      grid.insert(static_cast<std::uint32_t>(i), p);
      if ((flags[root] & 3) == 3) axis0 = true;
      if ((flags[root] & 12) == 12) axis1 = true;
      if (axis0 && axis1 && !std::isfinite(out.critical_level)) out.critical_level = labels[i];
    }
    out.largest_fraction[g] = next ? double(largest) / double(next) : 0.0;
  }
  return out;
}

}  // namespace detail

/// One replicate: an environment draw, a Poisson draw at max(z_grid), and
/// one uniform label per point.
template <std::size_t D>
ReplicateOutcome percolation_replicate(const IntensityModel<D>& model, const std::vector<double>& z_grid, double a,
                                       double L, Seed seed, const PercolationOptions& opt = {}) {
  const Window<D> window = Window<D>::cube(0.0, L);
  const double margin = opt.guard_margin > 0.0 ? opt.guard_margin : default_guard_margin<D>(model);
  const auto env = realize_environment<D>(model, window, margin, derive_seed(seed, "environment"));
  Rng rng(derive_seed(seed, "points"));
  const auto top = sample_poisson(env, window, z_grid.back(), rng);
  std::vector<double> labels(top.size());
  for (auto& u : labels) u = rng.uniform();
  return detail::coupled_scan_replicate<D>(top, labels, a, window, z_grid, opt);
}

/// Crossing probability (axis 0 of the L^D window) and largest-component
/// fraction for every z in the grid.
template <std::size_t D>
PercolationScanRow estimate_crossing_probability(const IntensityModel<D>& model, const std::vector<double>& z_grid,
                                                 double a, double L, std::size_t replicates, Seed seed,
                                                 const PercolationOptions& opt = {}) {
  detail::validate_z_grid(z_grid);
  detail::validate_radius(a);
  if (!(L > 4.0 * a)) throw InvalidArgument("window side must exceed 4a");
  if (replicates == 0) throw InvalidArgument("replicates must be positive");
  if (opt.both_axes && D < 2) throw InvalidArgument("both-axes crossing needs d >= 2");
  PercolationScanRow row;
  row.environment = model_name<D>(model);
  row.L = L;
  row.z_grid = z_grid;
  for (std::size_t r = 0; r < replicates; ++r) {
    row.replicates.push_back(percolation_replicate<D>(model, z_grid, a, L, derive_seed(seed, r), opt));
  }
  for (std::size_t g = 0; g < z_grid.size(); ++g) {
    std::size_t k = 0;
    std::vector<double> frac;
    for (const auto& rep : row.replicates) {
      if (rep.crosses_at(z_grid[g])) ++k;
      frac.push_back(rep.largest_fraction[g]);
    }
    row.crossing.push_back(summarize_proportion(k, replicates));
    row.largest_fraction.push_back(replicates >= 2 ? summarize_replicates(frac) : exact_estimate(frac[0]));
  }
  return row;
}

/// Crossing probability implied by replicate outcomes at an arbitrary z ≤ z_max.
inline double crossing_fraction(std::span<const ReplicateOutcome> reps, double z) {
  std::size_t k = 0;
  for (const auto& r : reps) k += r.crosses_at(z) ? 1 : 0;
  return double(k) / double(reps.size());
}

/// Where the crossing curve of `larger` overtakes that of `smaller`, by linear
/// interpolation on the shared grid. Among several sign changes of the
/// difference, the one with the mean crossing probability closest to 1/2 wins.
inline std::optional<double> crossing_curve_intersection(const PercolationScanRow& smaller,
                                                         const PercolationScanRow& larger) {
  if (smaller.z_grid != larger.z_grid) throw InvalidArgument("scan rows must share the z grid");
  const auto& z = smaller.z_grid;
  std::optional<double> best;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g + 1 < z.size(); ++g) {
    const double d0 = larger.crossing[g].value - smaller.crossing[g].value;
    const double d1 = larger.crossing[g + 1].value - smaller.crossing[g + 1].value;
    if (!(d0 <= 0.0 && d1 > 0.0)) continue;
    const double t = d0 == d1 ? 0.5 : d0 / (d0 - d1);
    const double zc = z[g] + t * (z[g + 1] - z[g]);
    const double pm = 0.25 * (smaller.crossing[g].value + smaller.crossing[g + 1].value + larger.crossing[g].value +
                              larger.crossing[g + 1].value);
    const double score = std::abs(pm - 0.5);
    if (score < best_score) {
      best_score = score;
      best = zc;
    }
  }
  return best;
}

struct CriticalSearchOptions {
  double z_lo = 0.0;
  double z_hi = 4.0;
  std::size_t replicates = 200;
  std::size_t groups = 10;
  PercolationOptions percolation{};
};

namespace detail {

/// With wilson_stop, bisection ends as soon as the Wilson interval at the
/// midpoint contains the target; otherwise only the tolerance ends it.
inline double bisect_threshold(std::span<const double> critical_z, double target, double tolerance, double lo,
                               double hi, bool wilson_stop = true) {
  const std::size_t n = critical_z.size();
  const auto count_below = [&](double z) {
    return static_cast<std::size_t>(std::count_if(critical_z.begin(), critical_z.end(), [&](double c) { return c < z; }));
  };
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    const std::size_t k = count_below(mid);
    const auto [wlo, whi] = wilson_interval(k, n);
    if (wilson_stop && wlo <= target && target <= whi) return mid;
    if (double(k) / double(n) < target) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// z at which the crossing probability reaches target_prob, by bisection on
/// the coupled crossing curve. Bisection stops when the Wilson interval at the
/// midpoint brackets the target or the bracket is narrower than `tolerance`.
/// The standard error comes from repeating the search on disjoint replicate
/// groups, widened by the distance between the early-stopped midpoint and the
/// full-sample quantile.
template <std::size_t D>
EstimateWithError estimate_critical_intensity(const IntensityModel<D>& model, double a, double L, double target_prob,
                                              double tolerance, Seed seed, const CriticalSearchOptions& opt = {}) {
  if (!(target_prob > 0.0 && target_prob < 1.0)) throw InvalidArgument("target probability must be in (0, 1)");
  if (!(tolerance > 0.0)) throw InvalidArgument("tolerance must be positive");
  if (!(opt.z_hi > opt.z_lo && opt.z_lo >= 0.0)) throw InvalidArgument("need 0 <= z_lo < z_hi");
  if (opt.groups < 2 || opt.replicates < opt.groups) throw InvalidArgument("need at least 2 groups of replicates");
  const auto row = estimate_crossing_probability<D>(model, {opt.z_lo, opt.z_hi}, a, L, opt.replicates, seed,
                                                    opt.percolation);
  std::vector<double> critical;
  for (const auto& r : row.replicates) critical.push_back(r.critical_z());
  if (row.crossing[0].value > target_prob || row.crossing[1].value < target_prob) {
    throw InvalidArgument("initial z interval does not bracket the target crossing probability");
  }
  EstimateWithError e;
  e.value = detail::bisect_threshold(critical, target_prob, tolerance, opt.z_lo, opt.z_hi);
  // Small groups would mostly stop at the same early midpoint, so the spread
  // uses tolerance-only bisection; the early stop adds its offset from the
  // full-sample quantile.
  const double quantile = detail::bisect_threshold(critical, target_prob, tolerance, opt.z_lo, opt.z_hi, false);
  const std::size_t per = opt.replicates / opt.groups;
  std::vector<double> group_values;
  for (std::size_t g = 0; g < opt.groups; ++g) {
    std::span<const double> part(critical.data() + g * per, per);
    group_values.push_back(detail::bisect_threshold(part, target_prob, tolerance, opt.z_lo, opt.z_hi, false));
  }
  const double offset = e.value - quantile;
  e.std_error = std::sqrt(sample_variance(group_values) / double(opt.groups) + offset * offset);
  e.n = opt.replicates;
  e.method = EstimateMethod::ReplicateVariance;
  std::tie(e.lo, e.hi) = e.interval(kZ95);
  return e;
}

}  // namespace wrlab
