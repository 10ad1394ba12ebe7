#pragma once

// Finite-volume two-colored Widom-Rowlinson measures.
//
// A marked configuration is viable when no plus point and minus point are
// within 2a of each other. Wired boundary conditions color ∂Λ: under
// PlusWired no minus point may lie within 2a of ∂Λ, and symmetrically.
// The reference measure is Poisson with intensity z·σ per color.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wrlab/errors.hpp"
#include "wrlab/geometry.hpp"
#include "wrlab/intensity.hpp"
#include "wrlab/rng.hpp"
#include "wrlab/stats.hpp"

namespace wrlab {

enum class Color : std::int8_t { Minus = -1, Plus = 1 };

inline Color opposite(Color c) { return c == Color::Plus ? Color::Minus : Color::Plus; }
inline char color_char(Color c) { return c == Color::Plus ? '+' : '-'; }

template <std::size_t D>
struct MarkedPoint {
  Point<D> position{};
  Color color = Color::Plus;

  bool operator==(const MarkedPoint&) const = default;
  auto operator<=>(const MarkedPoint&) const = default;
};

template <std::size_t D>
class MarkedConfiguration {
 public:
  MarkedConfiguration() = default;
  explicit MarkedConfiguration(std::vector<MarkedPoint<D>> points) : points_(std::move(points)) {
    std::vector<Point<D>> pos;
    pos.reserve(points_.size());
    for (const auto& p : points_) pos.push_back(p.position);
    Configuration<D> check(std::move(pos));  // finiteness and distinct positions
  }

  std::span<const MarkedPoint<D>> points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const MarkedPoint<D>& operator[](std::size_t i) const { return points_[i]; }
  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }

  /// Positions of one color (ω⁺ or ω⁻).
  Configuration<D> of_color(Color c) const {
    std::vector<Point<D>> pos;
    for (const auto& p : points_) {
      if (p.color == c) pos.push_back(p.position);
    }
    return Configuration<D>(std::move(pos));
  }

  Configuration<D> positions() const {
    std::vector<Point<D>> pos;
    pos.reserve(points_.size());
    for (const auto& p : points_) pos.push_back(p.position);
    return Configuration<D>(std::move(pos));
  }

  std::size_t count(Color c, const Window<D>& region) const {
    return static_cast<std::size_t>(std::count_if(points_.begin(), points_.end(), [&](const MarkedPoint<D>& p) {
      return p.color == c && region.contains(p.position);
    }));
  }

  MarkedConfiguration flipped() const {
    MarkedConfiguration out = *this;
    for (auto& p : out.points_) p.color = opposite(p.color);
    return out;
  }

  bool operator==(const MarkedConfiguration&) const = default;

 private:
  std::vector<MarkedPoint<D>> points_;
};

enum class BoundaryCondition { PlusWired, MinusWired, Free };

inline BoundaryCondition swapped(BoundaryCondition b) {
  switch (b) {
    case BoundaryCondition::PlusWired: return BoundaryCondition::MinusWired;
    case BoundaryCondition::MinusWired: return BoundaryCondition::PlusWired;
    case BoundaryCondition::Free: return BoundaryCondition::Free;
  }
  return b;
}

/// Color that may not come within 2a of ∂Λ, if any.
inline std::optional<Color> excluded_near_boundary(BoundaryCondition b) {
  switch (b) {
    case BoundaryCondition::PlusWired: return Color::Minus;
    case BoundaryCondition::MinusWired: return Color::Plus;
    case BoundaryCondition::Free: return std::nullopt;
  }
  return std::nullopt;
}

template <std::size_t D>
struct WRParams {
  double a = 1.0;
  double z = 1.0;
  SharedEnvironment<D> env;
  Window<D> window;

  void validate() const {
    detail::validate_radius(a);
    if (!(z >= 0.0) || !std::isfinite(z)) throw InvalidArgument("z must be nonnegative");
    if (!env) throw InvalidArgument("missing environment");
    if (!env->guard_window().contains(window)) throw InvalidArgument("window must lie inside the guard window");
  }
};

struct MoveMix {
  double birth = 0.4;
  double death = 0.4;
  double recolor = 0.2;
};

struct MCMCSettings {
  std::size_t sweeps = 2000;
  std::size_t burn_in = 200;
  std::size_t thinning = 1;
  MoveMix move_mix{};
  std::size_t batch_count = 16;
  /// Audit knob: births run this many times faster relative to deaths, so the
  /// chain targets activity multiplier·z. Anything but 1 breaks the target
  /// law; used as a negative control.
  double birth_rate_multiplier = 1.0;
  /// Throw DiagnosticsFailure instead of flagging.
  bool strict_diagnostics = false;

  void validate() const {
    const auto& m = move_mix;
    if (m.birth < 0 || m.death < 0 || m.recolor < 0 || std::abs(m.birth + m.death + m.recolor - 1.0) > 1e-9) {
      throw InvalidArgument("move mix must be nonnegative probabilities summing to 1");
    }
    if (m.birth == 0.0 || m.death == 0.0) throw InvalidArgument("birth and death probabilities must be positive");
    if (!(sweeps > burn_in)) throw InvalidArgument("sweeps must exceed burn_in");
    if (thinning == 0) throw InvalidArgument("thinning must be at least 1");
    if (batch_count < kMinBatches) throw InvalidArgument("batch_count must be at least 8");
    if (retained() < batch_count) throw InvalidArgument("fewer retained samples than batches");
    if (!(birth_rate_multiplier > 0.0)) throw InvalidArgument("birth rate multiplier must be positive");
  }

  std::size_t retained() const { return (sweeps - burn_in + thinning - 1) / thinning; }
};

/// Metropolis ratio of a WR birth from n to n + 1 points (before the viability
/// test), with marked reference mass 2zσ(Λ).
inline double wr_birth_ratio(double marked_mass, std::size_t n, const MoveMix& mix) {
  return marked_mass / double(n + 1) * (mix.death / mix.birth);
}

/// Metropolis ratio of a WR death from n to n − 1 points.
inline double wr_death_ratio(double marked_mass, std::size_t n, const MoveMix& mix) {
  return double(n) / marked_mass * (mix.birth / mix.death);
}

/// Viability of a marked configuration under a boundary condition.
template <std::size_t D>
bool is_viable(const MarkedConfiguration<D>& conf, double a, BoundaryCondition boundary, const Window<D>& window) {
  detail::validate_radius(a);
  const double reach = 2.0 * a;
  const double reach2 = reach * reach;
  const auto banned = excluded_near_boundary(boundary);
  CellGrid<D> grid(window, reach);
  for (std::size_t i = 0; i < conf.size(); ++i) {
    const auto& p = conf[i];
    if (!window.contains(p.position)) throw InvalidArgument("marked point outside the window");
    if (banned && p.color == *banned && window.distance_to_boundary(p.position) <= reach) return false;
    bool clash = false;
    grid.for_each_near(p.position, [&](std::uint32_t j) {
      if (conf[j].color != p.color && distance2(conf[j].position, p.position) <= reach2) clash = true;
    });
    if (clash) return false;
    grid.insert(static_cast<std::uint32_t>(i), p.position);
  }
  return true;
}

namespace detail {

template <std::size_t D>
MarkedConfiguration<D> color_uniformly(const Configuration<D>& positions, Rng& rng) {
  std::vector<MarkedPoint<D>> pts;
  pts.reserve(positions.size());
  for (const auto& p : positions) pts.push_back({p, rng.bernoulli(0.5) ? Color::Plus : Color::Minus});
  return MarkedConfiguration<D>(std::move(pts));
}

}  // namespace detail

struct RejectionTrace {
  std::uint64_t attempts = 0;
};

/// Exact draw from the specification on Λ̄ given the boundary: marked Poisson
/// proposals (unmarked rate 2z·σ, fair colors) until one is viable.
template <std::size_t D>
MarkedConfiguration<D> sample_wr_rejection(const WRParams<D>& params, BoundaryCondition boundary, Rng& rng,
                                           std::uint64_t max_attempts, RejectionTrace* trace = nullptr) {
  params.validate();
  if (max_attempts == 0) throw InvalidArgument("max_attempts must be positive");
  if (params.z == 0.0) {
    if (trace) trace->attempts = 1;
    return {};
  }
  for (std::uint64_t k = 1; k <= max_attempts; ++k) {
    const auto positions = sample_poisson(*params.env, params.window, 2.0 * params.z, rng);
    auto marked = detail::color_uniformly(positions, rng);
    if (is_viable(marked, params.a, boundary, params.window)) {
      if (trace) trace->attempts = k;
      return marked;
    }
  }
  throw RejectionExhausted(max_attempts, 0);
}

template <std::size_t D>
MarkedConfiguration<D> sample_wr_rejection(const WRParams<D>& params, BoundaryCondition boundary, Seed seed,
                                           std::uint64_t max_attempts) {
  Rng rng(seed);
  return sample_wr_rejection(params, boundary, rng, max_attempts);
}

struct MoveCounters {
  std::uint64_t proposed_birth = 0, accepted_birth = 0;
  std::uint64_t proposed_death = 0, accepted_death = 0;
  std::uint64_t proposed_recolor = 0, accepted_recolor = 0;
};

/// Birth-death-recolor Metropolis chain targeting the WR specification on Λ̄.
///
/// birth: x ~ σ_Λ/σ(Λ), fair color; accept min(1, 2zσ(Λ)/(n+1)·p_d/p_b) if viable.
/// death: uniform victim; accept min(1, n/(2zσ(Λ))·p_b/p_d).
/// recolor: flip the same-color 2a-component of a uniform point. In a viable
/// state that component has no opposite-color neighbours, so the flip is
/// viable unless it brings the excluded color within 2a of ∂Λ.
template <std::size_t D>
class WRChain {
 public:
  WRChain(WRParams<D> params, BoundaryCondition boundary, MCMCSettings settings,
          MarkedConfiguration<D> initial = {})
      : params_(std::move(params)), boundary_(boundary), settings_(settings) {
    params_.validate();
    settings_.validate();
    reach_ = 2.0 * params_.a;
    reach2_ = reach_ * reach_;
    grid_ = CellGrid<D>(params_.window, reach_);
    if (params_.z > 0.0) {
      const double mass = total_mass(*params_.env, params_.window);
      if (mass > 0.0) {
        sampler_.emplace(params_.env, params_.window);
        rate_ = 2.0 * params_.z * sampler_->mass();
        mass_ = rate_ * settings_.birth_rate_multiplier;
      }
    }
    if (!is_viable(initial, params_.a, boundary_, params_.window)) {
      throw InvalidArgument("initial state is not viable");
    }
    if (degenerate() && !initial.empty()) throw InvalidArgument("degenerate chain must start empty");
    for (const auto& p : initial) add(p);
  }

  /// True when z·σ(Λ) = 0: the chain is pinned at the empty configuration.
  bool degenerate() const { return !sampler_.has_value(); }

  /// Total marked reference mass 2z·σ(Λ).
  double marked_mass() const { return rate_; }

  std::size_t moves_per_sweep() const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.5 * rate_)));
  }

  void step(Rng& rng) {
    if (degenerate()) return;
    const auto& mix = settings_.move_mix;
    const double u = rng.uniform();
    if (u < mix.birth) {
      propose_birth(rng);
    } else if (u < mix.birth + mix.death) {
      propose_death(rng);
    } else {
      propose_recolor(rng);
    }
  }

  void sweep(Rng& rng) {
    const std::size_t m = moves_per_sweep();
    for (std::size_t k = 0; k < m; ++k) step(rng);
  }

  std::size_t size() const { return pts_.size(); }
  std::span<const MarkedPoint<D>> points() const { return pts_; }

  MarkedConfiguration<D> state() const { return MarkedConfiguration<D>(pts_); }

  std::size_t count(Color c, const Window<D>& region) const {
    return static_cast<std::size_t>(std::count_if(pts_.begin(), pts_.end(), [&](const MarkedPoint<D>& p) {
      return p.color == c && region.contains(p.position);
    }));
  }

  const MoveCounters& counters() const { return counters_; }
  const WRParams<D>& params() const { return params_; }
  BoundaryCondition boundary() const { return boundary_; }
  const MCMCSettings& settings() const { return settings_; }

 private:
  bool forbidden_near_boundary(Color c, const Point<D>& x) const {
    const auto banned = excluded_near_boundary(boundary_);
    return banned && *banned == c && params_.window.distance_to_boundary(x) <= reach_;
  }

  void add(const MarkedPoint<D>& p) {
    grid_.insert(static_cast<std::uint32_t>(pts_.size()), p.position);
    pts_.push_back(p);
  }

  void remove(std::size_t i) {
    const std::size_t last = pts_.size() - 1;
    grid_.erase(static_cast<std::uint32_t>(i), pts_[i].position);
    if (i != last) {
      grid_.rename(static_cast<std::uint32_t>(last), static_cast<std::uint32_t>(i), pts_[last].position);
      pts_[i] = pts_[last];
    }
    pts_.pop_back();
  }

  void propose_birth(Rng& rng) {
    ++counters_.proposed_birth;
    const Point<D> x = (*sampler_)(rng);
    const Color c = rng.bernoulli(0.5) ? Color::Plus : Color::Minus;
    const double u = rng.uniform();
    const double ratio = wr_birth_ratio(mass_, pts_.size(), settings_.move_mix);
    if (u >= ratio) return;
    if (forbidden_near_boundary(c, x)) return;
    bool clash = false;
    grid_.for_each_near(x, [&](std::uint32_t j) {
      if (pts_[j].color != c && distance2(pts_[j].position, x) <= reach2_) clash = true;
      if (pts_[j].position == x) clash = true;
    });
    if (clash) return;
    add({x, c});
    ++counters_.accepted_birth;
  }

  void propose_death(Rng& rng) {
    ++counters_.proposed_death;
    if (pts_.empty()) return;
    const std::size_t i = rng.below(pts_.size());
    const double u = rng.uniform();
    const double ratio = wr_death_ratio(mass_, pts_.size(), settings_.move_mix);
    if (u >= ratio) return;
    remove(i);
    ++counters_.accepted_death;
  }

  void propose_recolor(Rng& rng) {
    ++counters_.proposed_recolor;
    if (pts_.empty()) return;
    const std::size_t start = rng.below(pts_.size());
    const Color c = pts_[start].color;
    const Color target = opposite(c);
    const auto banned = excluded_near_boundary(boundary_);
    const bool check_boundary = banned && *banned == target;

    mark_.assign(pts_.size(), 0);
    queue_.clear();
    queue_.push_back(static_cast<std::uint32_t>(start));
    mark_[start] = 1;
    for (std::size_t head = 0; head < queue_.size(); ++head) {
      const auto& p = pts_[queue_[head]].position;
      if (check_boundary && params_.window.distance_to_boundary(p) <= reach_) return;
      grid_.for_each_near(p, [&](std::uint32_t j) {
        if (!mark_[j] && pts_[j].color == c && distance2(pts_[j].position, p) <= reach2_) {
          mark_[j] = 1;
          queue_.push_back(j);
        }
      });
    }
    for (auto j : queue_) pts_[j].color = target;
    ++counters_.accepted_recolor;
  }

  WRParams<D> params_;
  BoundaryCondition boundary_;
  MCMCSettings settings_;
  double reach_ = 0.0;
  double reach2_ = 0.0;
  double rate_ = 0.0;
  // reference mass of the Metropolis ratios; rate_ unless the multiplier is set
  double mass_ = 0.0;
  std::optional<LocationSampler<D>> sampler_;
  CellGrid<D> grid_;
  std::vector<MarkedPoint<D>> pts_;
  std::vector<std::uint8_t> mark_;
  std::vector<std::uint32_t> queue_;
  MoveCounters counters_;
};

/// One transition of the chain from `state`.
template <std::size_t D>
MarkedConfiguration<D> step_wr_mcmc(const MarkedConfiguration<D>& state, const WRParams<D>& params,
                                    BoundaryCondition boundary, const MCMCSettings& settings, Rng& rng) {
  if (!is_viable(state, params.a, boundary, params.window)) throw InvalidArgument("state is not viable");
  WRChain<D> chain(params, boundary, settings, state);
  chain.step(rng);
  return chain.state();
}

/// Runs sweeps, calling on_sample(chain, sweep) for every retained state.
template <typename Chain, typename Fn>
void run_chain(Chain& chain, const MCMCSettings& settings, Rng& rng, Fn&& on_sample) {
  for (std::size_t s = 0; s < settings.sweeps; ++s) {
    chain.sweep(rng);
    if (s >= settings.burn_in && (s - settings.burn_in) % settings.thinning == 0) on_sample(chain, s);
  }
}

namespace detail {

inline void check_diagnostics(const EstimateWithError& e, const MCMCSettings& settings, const std::string& what) {
  if (e.flagged && settings.strict_diagnostics) {
    throw DiagnosticsFailure(what + ": lag-1 autocorrelation of batch means " + std::to_string(e.lag1_autocorrelation) +
                             " exceeds 0.5");
  }
}

template <std::size_t D>
void require_subwindow(const Window<D>& inner, const Window<D>& outer) {
  if (!outer.contains(inner)) throw InvalidArgument("delta must lie inside the window");
}

}  // namespace detail

/// Batch-means estimate of E_boundary[f(ω)] averaged over independent chains.
template <std::size_t D, typename Stat>
EstimateWithError estimate_wr_functional(const WRParams<D>& params, BoundaryCondition boundary,
                                         const MCMCSettings& settings, std::size_t replicates, Seed seed,
                                         Stat&& stat) {
  params.validate();
  settings.validate();
  if (replicates == 0) throw InvalidArgument("replicates must be positive");
  std::vector<EstimateWithError> parts;
  for (std::size_t r = 0; r < replicates; ++r) {
    Rng rng(derive_seed(seed, r));
    WRChain<D> chain(params, boundary, settings);
    if (chain.degenerate()) {
      parts.push_back(exact_estimate(stat(chain)));
      continue;
    }
    std::vector<double> series;
    series.reserve(settings.retained());
    run_chain(chain, settings, rng, [&](const WRChain<D>& c, std::size_t) { series.push_back(stat(c)); });
    parts.push_back(summarize_batch_means(series, settings.batch_count));
  }
  auto est = average_estimates(parts);
  detail::check_diagnostics(est, settings, "wr chain");
  return est;
}

/// Color imbalance E_boundary[|ω⁺_Δ| − |ω⁻_Δ|].
template <std::size_t D>
EstimateWithError estimate_color_imbalance(const WRParams<D>& params, BoundaryCondition boundary,
                                           const Window<D>& delta, const MCMCSettings& settings,
                                           std::size_t replicates, Seed seed) {
  detail::require_subwindow(delta, params.window);
  return estimate_wr_functional<D>(params, boundary, settings, replicates, seed, [&](const WRChain<D>& c) {
    return double(c.count(Color::Plus, delta)) - double(c.count(Color::Minus, delta));
  });
}

/// Ψ̂ = Ê_{PlusWired}[|ω⁺_Δ| − |ω⁻_Δ|] (single-chain form).
template <std::size_t D>
EstimateWithError estimate_order_parameter(const WRParams<D>& params, const Window<D>& delta,
                                           const MCMCSettings& settings, std::size_t replicates, Seed seed) {
  return estimate_color_imbalance(params, BoundaryCondition::PlusWired, delta, settings, replicates, seed);
}

/// Ψ̂ = Ê⁺|ω⁺_Δ| − Ê⁻|ω⁺_Δ| from separate plus- and minus-wired chains.
template <std::size_t D>
EstimateWithError estimate_order_parameter_two_chain(const WRParams<D>& params, const Window<D>& delta,
                                                     const MCMCSettings& settings, std::size_t replicates,
                                                     Seed seed) {
  detail::require_subwindow(delta, params.window);
  const auto plus_count = [&](const WRChain<D>& c) { return double(c.count(Color::Plus, delta)); };
  const auto up = estimate_wr_functional<D>(params, BoundaryCondition::PlusWired, settings, replicates,
                                            derive_seed(seed, "plus-wired"), plus_count);
  const auto down = estimate_wr_functional<D>(params, BoundaryCondition::MinusWired, settings, replicates,
                                              derive_seed(seed, "minus-wired"), plus_count);
  EstimateWithError e = up;
  e.value = up.value - down.value;
  e.std_error = combined_std_error(up, down);
  e.n = up.n + down.n;
  e.flagged = up.flagged || down.flagged;
  std::tie(e.lo, e.hi) = e.interval(kZ95);
  return e;
}

struct DlrStatistic {
  std::string name;
  double mean_original = 0.0;
  double mean_resampled = 0.0;
  double t_statistic = 0.0;
  double p_value = 1.0;
};

struct DlrReport {
  std::vector<DlrStatistic> statistics;
  /// Bonferroni-adjusted minimum p-value over the statistics.
  double p_value = 1.0;
  double alpha = 0.01;
  bool rejected = false;
  std::size_t samples = 0;
  std::uint64_t resample_attempts = 0;
};

struct DlrOptions {
  double alpha = 0.01;
  std::uint64_t max_resample_attempts = 1'000'000;
};

namespace detail {

template <std::size_t D>
std::array<double, 3> delta_statistics(std::span<const MarkedPoint<D>> pts, const Window<D>& delta, double a) {
  std::vector<Point<D>> inside;
  double plus = 0.0;
  double minus = 0.0;
  for (const auto& p : pts) {
    if (!delta.contains(p.position)) continue;
    (p.color == Color::Plus ? plus : minus) += 1.0;
    inside.push_back(p.position);
  }
  const double reach2 = 4.0 * a * a;
  double edges = 0.0;
  for (std::size_t i = 0; i < inside.size(); ++i) {
    for (std::size_t j = i + 1; j < inside.size(); ++j) {
      if (distance2(inside[i], inside[j]) <= reach2) edges += 1.0;
    }
  }
  return {plus, minus, edges};
}

}  // namespace detail

/// Resample the points in Δ from the specification on Δ̄ given everything
/// outside Δ and the boundary condition on ∂Λ. Returns the number of attempts.
template <std::size_t D>
std::uint64_t resample_inside(std::vector<MarkedPoint<D>>& pts, const WRParams<D>& params,
                              BoundaryCondition boundary, const Window<D>& delta, Rng& rng,
                              std::uint64_t max_attempts) {
  std::vector<MarkedPoint<D>> outside;
  for (const auto& p : pts) {
    if (!delta.contains(p.position)) outside.push_back(p);
  }
  const double reach = 2.0 * params.a;
  const double reach2 = reach * reach;
  const auto banned = excluded_near_boundary(boundary);
  CellGrid<D> grid(params.window, reach);
  for (std::size_t i = 0; i < outside.size(); ++i) grid.insert(static_cast<std::uint32_t>(i), outside[i].position);

  for (std::uint64_t k = 1; k <= max_attempts; ++k) {
    const auto proposal = detail::color_uniformly(sample_poisson(*params.env, delta, 2.0 * params.z, rng), rng);
    bool ok = true;
    for (std::size_t i = 0; ok && i < proposal.size(); ++i) {
      const auto& p = proposal[i];
      if (banned && p.color == *banned && params.window.distance_to_boundary(p.position) <= reach) ok = false;
      for (std::size_t j = 0; ok && j < i; ++j) {
        if (proposal[j].color != p.color && distance2(proposal[j].position, p.position) <= reach2) ok = false;
      }
      grid.for_each_near(p.position, [&](std::uint32_t j) {
        if (outside[j].color != p.color && distance2(outside[j].position, p.position) <= reach2) ok = false;
      });
    }
    if (ok) {
      pts = std::move(outside);
      pts.insert(pts.end(), proposal.begin(), proposal.end());
      return k;
    }
  }
  throw RejectionExhausted(max_attempts, 0);
}

inline const std::array<std::string, 3>& dlr_statistic_names() {
  static const std::array<std::string, 3> names = {"plus_in_delta", "minus_in_delta", "edges_in_delta"};
  return names;
}

/// Per-chain raw material of a DLR check: batch means of (original − resampled)
/// for each statistic, plus the plain means on both sides.
struct DlrBatches {
  std::array<std::vector<double>, 3> batch_differences;
  std::array<double, 3> mean_original{};
  std::array<double, 3> mean_resampled{};
  std::size_t samples = 0;
  std::uint64_t resample_attempts = 0;
};

/// For retained chain states, resample Δ from the local specification and
/// record per-state statistics (plus count, minus count, edges of the 2a-graph
/// inside Δ) before and after.
template <std::size_t D>
DlrBatches dlr_batch_differences(const WRParams<D>& params, BoundaryCondition boundary, const Window<D>& delta,
                                 const MCMCSettings& settings, Seed seed, const DlrOptions& options = {}) {
  params.validate();
  settings.validate();
  detail::require_subwindow(delta, params.window);
  DlrBatches out;
  WRChain<D> chain(params, boundary, settings);
  if (chain.degenerate()) {
    for (auto& b : out.batch_differences) b.assign(settings.batch_count, 0.0);
    out.samples = settings.retained();
    return out;
  }
  Rng chain_rng(derive_seed(seed, "chain"));
  Rng resample_rng(derive_seed(seed, "resample"));
  std::array<std::vector<double>, 3> original;
  std::array<std::vector<double>, 3> diff;
  double resampled_sum[3] = {0.0, 0.0, 0.0};
  run_chain(chain, settings, chain_rng, [&](const WRChain<D>& c, std::size_t) {
    std::vector<MarkedPoint<D>> pts(c.points().begin(), c.points().end());
    const auto before = detail::delta_statistics<D>(pts, delta, params.a);
    out.resample_attempts += resample_inside(pts, params, boundary, delta, resample_rng, options.max_resample_attempts);
    const auto after = detail::delta_statistics<D>(pts, delta, params.a);
    for (std::size_t k = 0; k < 3; ++k) {
      original[k].push_back(before[k]);
      diff[k].push_back(before[k] - after[k]);
      resampled_sum[k] += after[k];
    }
  });
  out.samples = original[0].size();
  for (std::size_t k = 0; k < 3; ++k) {
    out.batch_differences[k] = batch_series(diff[k], settings.batch_count);
    out.mean_original[k] = mean_of(original[k]);
    out.mean_resampled[k] = resampled_sum[k] / double(out.samples);
  }
  return out;
}

/// Combines batches from one or more independent chains: a t test of zero mean
/// on the pooled batch differences per statistic (df = batches − 1), then a
/// Bonferroni correction over the three statistics.
inline DlrReport dlr_report_from_batches(std::span<const DlrBatches> chains, double alpha) {
  if (chains.empty()) throw InvalidArgument("no DLR batches to combine");
  DlrReport report;
  report.alpha = alpha;
  double p_min = 1.0;
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> pooled;
    DlrStatistic st;
    st.name = dlr_statistic_names()[k];
    std::size_t samples = 0;
    for (const auto& c : chains) {
      pooled.insert(pooled.end(), c.batch_differences[k].begin(), c.batch_differences[k].end());
      st.mean_original += c.mean_original[k] * double(c.samples);
      st.mean_resampled += c.mean_resampled[k] * double(c.samples);
      samples += c.samples;
    }
    st.mean_original /= double(samples);
    st.mean_resampled /= double(samples);
    const double m = mean_of(pooled);
    const double se = std::sqrt(sample_variance(pooled) / double(pooled.size()));
    if (se == 0.0) {
      st.t_statistic = 0.0;
      st.p_value = m == 0.0 ? 1.0 : 0.0;
    } else {
      st.t_statistic = m / se;
      st.p_value = two_sided_t_p(st.t_statistic, double(pooled.size() - 1));
    }
    p_min = std::min(p_min, st.p_value);
    report.statistics.push_back(st);
    report.samples = samples;
  }
  for (const auto& c : chains) report.resample_attempts += c.resample_attempts;
  report.p_value = std::min(1.0, p_min * 3.0);
  report.rejected = report.p_value < alpha;
  return report;
}

/// DLR self-consistency of the chain output on Δ. Each statistic gets a paired
/// batch-means t test; the report p-value is the Bonferroni-adjusted minimum.
template <std::size_t D>
DlrReport dlr_consistency_check(const WRParams<D>& params, BoundaryCondition boundary, const Window<D>& delta,
                                const MCMCSettings& settings, Seed seed, const DlrOptions& options = {}) {
  const auto batches = dlr_batch_differences<D>(params, boundary, delta, settings, seed, options);
  return dlr_report_from_batches(std::span<const DlrBatches>(&batches, 1), options.alpha);
}

}  // namespace wrlab
