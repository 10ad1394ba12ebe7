#pragma once

// Continuum random-cluster measure with wired boundary: density 2^{C_∂Λ − 1}
// against the Poisson process of intensity zσ on Λ. Includes the merge bound
// behind stochastic domination of a thinned Poisson process, and checks of
// both the order-parameter identity and the domination itself.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "wrlab/geometry.hpp"
#include "wrlab/intensity.hpp"
#include "wrlab/percolation.hpp"
#include "wrlab/rng.hpp"
#include "wrlab/stats.hpp"
#include "wrlab/wr_gibbs.hpp"

namespace wrlab {

/// C_∂Λ(ω) − 1, the exponent of the random-cluster weight.
template <std::size_t D>
std::size_t rc_component_exponent(const Configuration<D>& conf, double a, const Window<D>& window) {
  return build_components(conf, {a, true}, window).num_components_wired - 1;
}

namespace detail {

/// Number of distinct wired components (the boundary counting as one) that a
/// new point at x would merge: C(ω ∪ {x}) = C(ω) + 1 − merged.
template <std::size_t D>
std::size_t merged_components(const Point<D>& x, std::span<const Point<D>> pts, const ComponentLabeling& lab,
                              const Window<D>& window) {
  const double reach = 2.0 * lab.a;
  const double reach2 = reach * reach;
  constexpr std::size_t ghost = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> seen;
  if (window.distance_to_boundary(x) <= reach) seen.push_back(ghost);
  for (std::size_t j = 0; j < pts.size(); ++j) {
    if (distance2(pts[j], x) > reach2) continue;
    const std::size_t l = lab.label_of[j];
    seen.push_back(lab.touches_boundary[l] ? ghost : l);
  }
  std::sort(seen.begin(), seen.end());
  return static_cast<std::size_t>(std::unique(seen.begin(), seen.end()) - seen.begin());
}

}  // namespace detail

/// Metropolis ratio of a random-cluster birth from n points, where the new
/// point changes the wired component count by delta_c. Birth and death are
/// chosen with probabilities proportional to mix.birth and mix.death.
inline double rc_birth_ratio(double mass, std::size_t n, int delta_c, const MoveMix& mix) {
  return mass / double(n + 1) * std::ldexp(1.0, delta_c) * (mix.death / mix.birth);
}

/// Metropolis ratio of a random-cluster death from n points; delta_c is the
/// change of the wired component count caused by the removal.
inline double rc_death_ratio(double mass, std::size_t n, int delta_c, const MoveMix& mix) {
  return double(n) / mass * std::ldexp(1.0, delta_c) * (mix.birth / mix.death);
}

/// Metropolis birth-death chain for the wired random-cluster measure.
template <std::size_t D>
class RCChain {
 public:
  RCChain(WRParams<D> params, MCMCSettings settings, Configuration<D> initial = {})
      : params_(std::move(params)), settings_(settings) {
    params_.validate();
    settings_.validate();
    reach_ = 2.0 * params_.a;
    reach2_ = reach_ * reach_;
    grid_ = CellGrid<D>(params_.window, reach_);
    detail::validate_inside(initial, params_.window);
    if (params_.z > 0.0) {
      const double mass = total_mass(*params_.env, params_.window);
      if (mass > 0.0) {
        sampler_.emplace(params_.env, params_.window);
        rate_ = params_.z * sampler_->mass();
        mass_ = rate_ * settings_.birth_rate_multiplier;
      }
    }
    if (degenerate() && !initial.empty()) throw InvalidArgument("degenerate chain must start empty");
    for (const auto& p : initial) insert_point(p);
  }

  bool degenerate() const { return !sampler_.has_value(); }
  /// z·σ(Λ).
  double mass() const { return rate_; }

  std::size_t moves_per_sweep() const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(rate_)));
  }

  void step(Rng& rng) {
    if (degenerate()) return;
    const auto& mix = settings_.move_mix;
    const double pb = mix.birth / (mix.birth + mix.death);
    if (rng.uniform() < pb) propose_birth(rng);
    else propose_death(rng);
  }

  void sweep(Rng& rng) {
    const std::size_t m = moves_per_sweep();
    for (std::size_t k = 0; k < m; ++k) step(rng);
  }

  std::size_t size() const { return pts_.size(); }
  std::span<const Point<D>> points() const { return pts_; }
  Configuration<D> state() const { return Configuration<D>(pts_); }

  /// Wired labeling of the current state with labels renumbered densely.
  ComponentLabeling labeling() const {
    ComponentLabeling lab;
    lab.wired = true;
    lab.a = params_.a;
    lab.label_of.assign(pts_.size(), 0);
    std::vector<std::size_t> dense(members_.size(), std::numeric_limits<std::size_t>::max());
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      auto& d = dense[comp_[i]];
      if (d == std::numeric_limits<std::size_t>::max()) {
        d = lab.num_components_free++;
        lab.touches_boundary.push_back(near_count_[comp_[i]] > 0);
        lab.component_size.push_back(members_[comp_[i]].size());
      }
      lab.label_of[i] = d;
    }
    lab.num_components_wired = wired_components();
    return lab;
  }

  std::size_t wired_components() const { return free_components_ - touching_components_ + 1; }

  /// N_{Δ,∂Λ}: points in Δ connected to the boundary.
  std::size_t boundary_connected(const Window<D>& delta) const {
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      if (near_count_[comp_[i]] > 0 && delta.contains(pts_[i])) ++k;
    }
    return k;
  }

  const MoveCounters& counters() const { return counters_; }
  const WRParams<D>& params() const { return params_; }

 private:
  // Components are kept incrementally: comp_[i] is the label of point i,
  // members_[l] lists the points of label l, slot_[i] is the position of i in
  // that list and near_count_[l] counts points of l within 2a of ∂Λ. Labels of
  // vanished components are recycled.

  enum class Split { Vanishes, Shrinks, Splits };

  bool near_boundary(const Point<D>& p) const { return params_.window.distance_to_boundary(p) <= reach_; }

  std::uint32_t new_label() {
    ++free_components_;
    if (!free_labels_.empty()) {
      const auto l = free_labels_.back();
      free_labels_.pop_back();
      return l;
    }
    members_.emplace_back();
    near_count_.push_back(0);
    return static_cast<std::uint32_t>(members_.size() - 1);
  }

  void drop_label(std::uint32_t l) {
    if (near_count_[l] > 0) --touching_components_;
    --free_components_;
    members_[l].clear();
    near_count_[l] = 0;
    free_labels_.push_back(l);
  }

  void set_near_count(std::uint32_t l, std::uint32_t count) {
    if (near_count_[l] > 0) --touching_components_;
    near_count_[l] = count;
    if (count > 0) ++touching_components_;
  }

  void assign(std::uint32_t i, std::uint32_t l) {
    comp_[i] = l;
    slot_[i] = static_cast<std::uint32_t>(members_[l].size());
    members_[l].push_back(i);
  }

  void detach(std::uint32_t i) {
    auto& m = members_[comp_[i]];
    const auto back = m.back();
    m[slot_[i]] = back;
    slot_[back] = slot_[i];
    m.pop_back();
  }

  /// Appends point x, joining it with every component within 2a.
  void insert_point(const Point<D>& x) {
    const auto i = static_cast<std::uint32_t>(pts_.size());
    pts_.push_back(x);
    comp_.push_back(0);
    slot_.push_back(0);
    std::vector<std::uint32_t>& near = labels_scratch_;
    near.clear();
    grid_.for_each_near(x, [&](std::uint32_t j) {
      if (distance2(pts_[j], x) <= reach2_) near.push_back(comp_[j]);
    });
    grid_.insert(i, x);
    std::sort(near.begin(), near.end());
    near.erase(std::unique(near.begin(), near.end()), near.end());
    std::uint32_t target = 0;
    std::uint32_t count = near_boundary(x) ? 1 : 0;
    if (near.empty()) {
      target = new_label();
    } else {
      target = *std::max_element(near.begin(), near.end(), [&](std::uint32_t a, std::uint32_t b) {
        return members_[a].size() < members_[b].size();
      });
      for (const auto l : near) {
        if (l == target) continue;
        count += near_count_[l];
        for (const auto j : members_[l]) assign(j, target);
        drop_label(l);
      }
    }
    assign(i, target);
    set_near_count(target, near_count_[target] + count);
  }

  std::uint32_t next_stamp() {
    stamp_.resize(pts_.size(), 0);
    if (++stamp_gen_ == 0) {
      std::fill(stamp_.begin(), stamp_.end(), 0);
      stamp_gen_ = 1;
    }
    return stamp_gen_;
  }

  /// True if the neighbours of i stay connected without i. Breadth-first from
  /// one neighbour, stopping once every other neighbour has been reached.
  bool neighbours_stay_connected(std::uint32_t i, const std::vector<std::uint32_t>& nb) {
    const auto seen = next_stamp();
    const auto target = next_stamp();
    for (const auto j : nb) stamp_[j] = target;
    std::size_t remaining = nb.size() - 1;
    stamp_[i] = seen;
    stamp_[nb[0]] = seen;
    queue_.clear();
    queue_.push_back(nb[0]);
    for (std::size_t head = 0; head < queue_.size() && remaining > 0; ++head) {
      const auto& p = pts_[queue_[head]];
      grid_.for_each_near(p, [&](std::uint32_t j) {
        if (stamp_[j] == seen || distance2(pts_[j], p) > reach2_) return;
        if (stamp_[j] == target) --remaining;
        stamp_[j] = seen;
        queue_.push_back(j);
      });
    }
    return remaining == 0;
  }

  /// All pieces of the component of i without i, back to back in queue_ with
  /// ends in piece_end_ and near-boundary counts in piece_near_. Returns the
  /// number of pieces that do not touch the boundary.
  int split_pieces(std::uint32_t i) {
    const auto seen = next_stamp();
    stamp_[i] = seen;
    queue_.clear();
    piece_end_.clear();
    piece_near_.clear();
    int free_pieces = 0;
    for (const auto s : members_[comp_[i]]) {
      if (stamp_[s] == seen) continue;
      stamp_[s] = seen;
      const std::size_t head0 = queue_.size();
      queue_.push_back(s);
      std::uint32_t near = 0;
      for (std::size_t head = head0; head < queue_.size(); ++head) {
        const auto& p = pts_[queue_[head]];
        if (near_boundary(p)) ++near;
        grid_.for_each_near(p, [&](std::uint32_t j) {
          if (stamp_[j] != seen && distance2(pts_[j], p) <= reach2_) {
            stamp_[j] = seen;
            queue_.push_back(j);
          }
        });
      }
      piece_end_.push_back(queue_.size());
      piece_near_.push_back(near);
      if (near == 0) ++free_pieces;
    }
    return free_pieces;
  }

  /// C(ω \ {x_i}) − C(ω); records in plan_ how the component of i changes.
  int death_delta(std::uint32_t i) {
    const auto l = comp_[i];
    const bool wired = near_count_[l] > 0;
    std::vector<std::uint32_t>& nb = labels_scratch_;
    nb.clear();
    grid_.for_each_near(pts_[i], [&](std::uint32_t j) {
      if (j != i && distance2(pts_[j], pts_[i]) <= reach2_) nb.push_back(j);
    });
    if (nb.empty()) {
      plan_ = Split::Vanishes;
      return wired ? 0 : -1;
    }
    if (nb.size() == 1 || neighbours_stay_connected(i, nb)) {
      plan_ = Split::Shrinks;
      const bool still_wired = near_count_[l] - (near_boundary(pts_[i]) ? 1 : 0) > 0;
      return wired && !still_wired ? 1 : 0;
    }
    plan_ = Split::Splits;
    const int free_pieces = split_pieces(i);
    const int pieces = static_cast<int>(piece_end_.size());
    return wired ? free_pieces : pieces - 1;
  }

  /// Removes point i following the plan of the preceding death_delta(i).
  void erase_point(std::uint32_t i) {
    const auto l = comp_[i];
    switch (plan_) {
      case Split::Vanishes: drop_label(l); break;
      case Split::Shrinks:
        detach(i);
        if (near_boundary(pts_[i])) set_near_count(l, near_count_[l] - 1);
        break;
      case Split::Splits: {
        drop_label(l);
        std::size_t begin = 0;
        for (std::size_t k = 0; k < piece_end_.size(); ++k) {
          const auto fresh = new_label();
          set_near_count(fresh, piece_near_[k]);
          for (std::size_t q = begin; q < piece_end_[k]; ++q) assign(queue_[q], fresh);
          begin = piece_end_[k];
        }
        break;
      }
    }
    const auto last = static_cast<std::uint32_t>(pts_.size() - 1);
    grid_.erase(i, pts_[i]);
    if (i != last) {
      grid_.rename(last, i, pts_[last]);
      pts_[i] = pts_[last];
      comp_[i] = comp_[last];
      slot_[i] = slot_[last];
      members_[comp_[i]][slot_[i]] = i;
    }
    pts_.pop_back();
    comp_.pop_back();
    slot_.pop_back();
  }

  void propose_birth(Rng& rng) {
    ++counters_.proposed_birth;
    const Point<D> x = (*sampler_)(rng);
    const double u = rng.uniform();
    bool duplicate = false;
    grid_.for_each_near(x, [&](std::uint32_t j) { duplicate = duplicate || pts_[j] == x; });
    if (duplicate) return;
    constexpr std::uint32_t ghost = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t>& seen = labels_scratch_;
    seen.clear();
    if (near_boundary(x)) seen.push_back(ghost);
    grid_.for_each_near(x, [&](std::uint32_t j) {
      if (distance2(pts_[j], x) <= reach2_) {
        const auto l = comp_[j];
        seen.push_back(near_count_[l] > 0 ? ghost : l);
      }
    });
    std::sort(seen.begin(), seen.end());
    const auto merged = static_cast<int>(std::unique(seen.begin(), seen.end()) - seen.begin());
    const double ratio =
        rc_birth_ratio(mass_, pts_.size(), 1 - merged, settings_.move_mix);
    if (u >= ratio) return;
    insert_point(x);
    ++counters_.accepted_birth;
  }

  void propose_death(Rng& rng) {
    ++counters_.proposed_death;
    if (pts_.empty()) return;
    const auto i = static_cast<std::uint32_t>(rng.below(pts_.size()));
    const double u = rng.uniform();
    const int delta = death_delta(i);
    const double ratio = rc_death_ratio(mass_, pts_.size(), delta, settings_.move_mix);
    if (u >= ratio) return;
    erase_point(i);
    ++counters_.accepted_death;
  }

  WRParams<D> params_;
  MCMCSettings settings_;
  double reach_ = 0.0;
  double reach2_ = 0.0;
  double rate_ = 0.0;
  // reference mass of the Metropolis ratios; rate_ unless the multiplier is set
  double mass_ = 0.0;
  std::optional<LocationSampler<D>> sampler_;
  CellGrid<D> grid_;
  std::vector<Point<D>> pts_;
  std::vector<std::uint32_t> comp_;
  std::vector<std::uint32_t> slot_;
  std::vector<std::vector<std::uint32_t>> members_;
  std::vector<std::uint32_t> near_count_;
  std::vector<std::uint32_t> free_labels_;
  std::size_t free_components_ = 0;
  std::size_t touching_components_ = 0;
  std::vector<std::uint32_t> stamp_;
  std::uint32_t stamp_gen_ = 0;
  std::vector<std::uint32_t> queue_;
  std::vector<std::size_t> piece_end_;
  std::vector<std::uint32_t> piece_near_;
  std::vector<std::uint32_t> labels_scratch_;
  Split plan_ = Split::Vanishes;
  MoveCounters counters_;
};

/// One transition of the random-cluster chain from `state`.
template <std::size_t D>
Configuration<D> step_rc_mcmc(const Configuration<D>& state, const WRParams<D>& params, const MCMCSettings& settings,
                              Rng& rng) {
  RCChain<D> chain(params, settings, state);
  chain.step(rng);
  return chain.state();
}

/// Positions of a plus-wired WR chain with colors dropped; each retained state
/// is a (correlated) draw from the random-cluster measure.
template <std::size_t D>
std::vector<Configuration<D>> sample_rc_by_color_dropping(const WRParams<D>& params, const MCMCSettings& settings,
                                                          Seed seed) {
  WRChain<D> chain(params, BoundaryCondition::PlusWired, settings);
  std::vector<Configuration<D>> out;
  if (chain.degenerate()) {
    out.assign(settings.retained(), Configuration<D>{});
    return out;
  }
  Rng rng(seed);
  run_chain(chain, settings, rng, [&](const WRChain<D>& c, std::size_t) { out.push_back(c.state().positions()); });
  return out;
}

/// Batch-means estimate of E_RC[f] over independent random-cluster chains.
template <std::size_t D, typename Stat>
EstimateWithError estimate_rc_functional(const WRParams<D>& params, const MCMCSettings& settings,
                                         std::size_t replicates, Seed seed, Stat&& stat) {
  params.validate();
  settings.validate();
  if (replicates == 0) throw InvalidArgument("replicates must be positive");
  std::vector<EstimateWithError> parts;
  for (std::size_t r = 0; r < replicates; ++r) {
    Rng rng(derive_seed(seed, r));
    RCChain<D> chain(params, settings);
    if (chain.degenerate()) {
      parts.push_back(exact_estimate(stat(chain)));
      continue;
    }
    std::vector<double> series;
    series.reserve(settings.retained());
    run_chain(chain, settings, rng, [&](const RCChain<D>& c, std::size_t) { series.push_back(stat(c)); });
    parts.push_back(summarize_batch_means(series, settings.batch_count));
  }
  auto est = average_estimates(parts);
  detail::check_diagnostics(est, settings, "random-cluster chain");
  return est;
}

/// E_RC[N_{Δ,∂Λ}] from a direct random-cluster chain.
template <std::size_t D>
EstimateWithError estimate_boundary_connected(const WRParams<D>& params, const Window<D>& delta,
                                              const MCMCSettings& settings, std::size_t replicates, Seed seed) {
  detail::require_subwindow(delta, params.window);
  return estimate_rc_functional<D>(params, settings, replicates, seed,
                                   [&](const RCChain<D>& c) { return double(c.boundary_connected(delta)); });
}

struct EsIdentityReport {
  EstimateWithError psi;
  EstimateWithError n_hat;
  double sigmas = 0.0;
  bool pass = false;
};

/// Compares the plus-wired color imbalance on Δ with the expected number of
/// boundary-connected points in Δ under the random-cluster measure. The two
/// sides use separate seeds and separate chains.
template <std::size_t D>
EsIdentityReport check_es_identity(const WRParams<D>& params, const Window<D>& delta, const MCMCSettings& settings,
                                   std::size_t replicates, Seed seed, double max_sigmas = 3.0) {
  EsIdentityReport r;
  r.psi = estimate_order_parameter<D>(params, delta, settings, replicates, derive_seed(seed, "wr"));
  r.n_hat = estimate_boundary_connected<D>(params, delta, settings, replicates, derive_seed(seed, "rc"));
  r.sigmas = discrepancy_in_sigmas(r.psi, r.n_hat);
  r.pass = r.sigmas <= max_sigmas;
  return r;
}

// ---------------------------------------------------------------------------
// Stochastic domination

/// Largest number of distinct wired components one inserted point can merge.
struct MergeBound {
  std::size_t observed = 0;
  /// Packing ceiling: points pairwise more than 2a apart inside a closed
  /// 2a-ball, plus the boundary.
  std::size_t analytic_cap = 0;
  std::size_t probes = 0;

  std::size_t value() const { return std::min(observed, analytic_cap); }
};

inline std::size_t merge_bound_cap(std::size_t d) {
  switch (d) {
    case 1: return 3;
    case 2: return 6;
  }
  throw InvalidArgument("merge bound is tabulated for d = 1 and d = 2 only");
}

namespace detail {

/// Greedy packing of the 2a-ball around x with points pairwise more than 2a
/// apart, biased towards the rim; optionally next to a face of the window.
template <std::size_t D>
std::size_t merge_probe(double a, Rng& rng) {
  const double reach = 2.0 * a;
  const double kind = rng.uniform();
  Point<D> x{};
  Window<D> window = Window<D>::cube(-6.0 * reach, 6.0 * reach);
  if (kind < 0.3) {
    // x close to the lower face of axis 0
    const double gap = rng.uniform() * reach;
    Point<D> lo;
    Point<D> hi;
    lo.fill(-6.0 * reach);
    hi.fill(6.0 * reach);
    lo[0] = -gap;
    window = Window<D>(lo, hi);
  }
  std::vector<Point<D>> pts;
  if (kind >= 0.95) {
    // points far from x only
    for (int k = 0; k < 6; ++k) {
      Point<D> p;
      for (std::size_t i = 0; i < D; ++i) p[i] = rng.uniform(3.0 * reach, 5.0 * reach);
      pts.push_back(p);
    }
  } else {
    const int tries = 40;
    for (int t = 0; t < tries; ++t) {
      Point<D> dir;
      double norm2 = 0.0;
      do {
        norm2 = 0.0;
        for (std::size_t i = 0; i < D; ++i) {
          dir[i] = rng.normal();
          norm2 += dir[i] * dir[i];
        }
      } while (norm2 == 0.0);
      const double r = rng.bernoulli(0.7) ? reach * (1.0 - 0.02 * rng.uniform()) : reach * std::pow(rng.uniform(), 1.0 / D);
      Point<D> p;
      for (std::size_t i = 0; i < D; ++i) p[i] = x[i] + dir[i] / std::sqrt(norm2) * r;
      if (!window.contains(p) || p == x) continue;
      bool ok = true;
      for (const auto& q : pts) ok = ok && distance2(p, q) > reach * reach;
      if (ok) pts.push_back(p);
    }
  }
  const Configuration<D> conf(pts);
  const auto lab = build_components(conf, {a, true}, window);
  return merged_components<D>(x, conf.points(), lab, window);
}

}  // namespace detail

/// Empirical merge bound over `probes` adversarial insertions in dimension d.
inline MergeBound estimate_merge_bound(std::size_t d, double a, std::size_t probes, Seed seed) {
  detail::validate_radius(a);
  if (probes < 100000) throw InvalidArgument("merge bound needs at least 1e5 probes");
  MergeBound mb;
  mb.analytic_cap = merge_bound_cap(d);
  mb.probes = probes;
  Rng rng(seed);
  for (std::size_t k = 0; k < probes; ++k) {
    const std::size_t m = d == 1 ? detail::merge_probe<1>(a, rng) : detail::merge_probe<2>(a, rng);
    mb.observed = std::max(mb.observed, m);
  }
  return mb;
}

struct DominationConfig {
  double tau = 0.0;
  std::size_t merge_bound = 0;

  /// Rejects τ above 2^{−K}, where the domination argument no longer applies.
  void validate() const {
    if (merge_bound == 0) throw InvalidArgument("merge bound must be positive");
    if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
    if (tau > std::ldexp(1.0, -static_cast<int>(merge_bound))) {
      throw InvalidArgument("tau exceeds 2^-K: the domination hypothesis fails");
    }
  }

  /// τ = 2^{−(K+1)}: one extra halving of safety over the bound.
  static DominationConfig from_merge_bound(const MergeBound& mb) {
    DominationConfig c;
    c.merge_bound = mb.value();
    c.tau = std::ldexp(1.0, -static_cast<int>(c.merge_bound) - 1);
    return c;
  }
};

/// Ratio of the random-cluster Papangelou intensity at x to τ·z·σ(x), i.e.
/// 2^{ΔC}/τ with ΔC = 1 − (components merged by x).
template <std::size_t D>
double papangelou_ratio(const Point<D>& x, const Configuration<D>& conf, double a, const Window<D>& window,
                        const DominationConfig& dom) {
  if (!window.contains(x)) throw InvalidArgument("insertion point outside the window");
  const auto lab = build_components(conf, {a, true}, window);
  const auto merged = detail::merged_components<D>(x, conf.points(), lab, window);
  return std::ldexp(1.0, 1 - static_cast<int>(merged)) / dom.tau;
}

template <std::size_t D>
struct IncreasingStatistic {
  std::string name;
  std::function<double(const Configuration<D>&)> evaluate;
};

/// Counts per orthant block, total count, boundary reach from Δ and axis-0 crossing.
template <std::size_t D>
std::vector<IncreasingStatistic<D>> standard_increasing_statistics(const Window<D>& window, double a,
                                                                   const Window<D>& delta) {
  std::vector<IncreasingStatistic<D>> out;
  out.push_back({"total_count", [](const Configuration<D>& c) { return double(c.size()); }});
  for (std::size_t mask = 0; mask < (std::size_t{1} << D); ++mask) {
    Point<D> lo;
    Point<D> hi;
    std::string tag;
    for (std::size_t i = 0; i < D; ++i) {
      const double mid = 0.5 * (window.lower[i] + window.upper[i]);
      const bool upper = (mask >> i) & 1;
      lo[i] = upper ? mid : window.lower[i];
      hi[i] = upper ? window.upper[i] : mid;
      tag += upper ? '1' : '0';
    }
    const Window<D> block(lo, hi);
    out.push_back({"block_count_" + tag, [block](const Configuration<D>& c) { return double(c.count_in(block)); }});
  }
  out.push_back({"boundary_reach", [window, a, delta](const Configuration<D>& c) {
                   return target_percolation_proxy(c, a, window, delta) ? 1.0 : 0.0;
                 }});
  out.push_back({"crossing", [window, a](const Configuration<D>& c) {
                   return has_crossing(build_components(c, {a, false}, window), c, window, 0) ? 1.0 : 0.0;
                 }});
  return out;
}

/// Random insertions that would expose a statistic that is not increasing.
/// Returns the number of violations found.
template <std::size_t D>
std::size_t spot_check_increasing(const IncreasingStatistic<D>& stat, const Window<D>& window, std::size_t trials,
                                  Seed seed) {
  Rng rng(seed);
  std::size_t violations = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<Point<D>> pts;
    const std::size_t n = rng.below(20);
    for (std::size_t k = 0; k < n; ++k) {
      Point<D> p;
      for (std::size_t i = 0; i < D; ++i) p[i] = rng.uniform(window.lower[i], window.upper[i]);
      pts.push_back(p);
    }
    Point<D> x;
    for (std::size_t i = 0; i < D; ++i) x[i] = rng.uniform(window.lower[i], window.upper[i]);
    const Configuration<D> base(pts);
    if (std::find(pts.begin(), pts.end(), x) != pts.end()) continue;
    if (stat.evaluate(base) > stat.evaluate(base.with(x))) ++violations;
  }
  return violations;
}

struct DominationRow {
  std::string statistic;
  EstimateWithError poisson;
  EstimateWithError random_cluster;
  bool pass = false;
};

struct DominationReport {
  DominationConfig config;
  std::vector<DominationRow> rows;
  bool pass = false;
};

/// One independent unit of a domination check: `retained` i.i.d. Poisson
/// draws at intensity τzσ and one random-cluster chain, each statistic
/// evaluated on both.
struct DominationReplicate {
  std::vector<EstimateWithError> poisson;
  std::vector<EstimateWithError> random_cluster;
};

template <std::size_t D>
DominationReplicate domination_replicate(const WRParams<D>& params, const DominationConfig& dom,
                                         const std::vector<IncreasingStatistic<D>>& stats,
                                         const MCMCSettings& settings, Seed seed) {
  dom.validate();
  params.validate();
  settings.validate();
  if (stats.empty()) throw InvalidArgument("no statistics to compare");
  DominationReplicate out;

  const std::size_t draws = std::max<std::size_t>(2, settings.retained());
  std::vector<std::vector<double>> poisson_values(stats.size());
  Rng prng(derive_seed(seed, "poisson"));
  for (std::size_t k = 0; k < draws; ++k) {
    const auto conf = sample_poisson(*params.env, params.window, dom.tau * params.z, prng);
    for (std::size_t s = 0; s < stats.size(); ++s) poisson_values[s].push_back(stats[s].evaluate(conf));
  }
  for (const auto& v : poisson_values) out.poisson.push_back(summarize_replicates(v));

  RCChain<D> chain(params, settings);
  if (chain.degenerate()) {
    for (const auto& st : stats) out.random_cluster.push_back(exact_estimate(st.evaluate(Configuration<D>{})));
    return out;
  }
  Rng rng(derive_seed(seed, "rc"));
  std::vector<std::vector<double>> series(stats.size());
  run_chain(chain, settings, rng, [&](const RCChain<D>& c, std::size_t) {
    const auto conf = c.state();
    for (std::size_t s = 0; s < stats.size(); ++s) series[s].push_back(stats[s].evaluate(conf));
  });
  for (const auto& v : series) out.random_cluster.push_back(summarize_batch_means(v, settings.batch_count));
  return out;
}

/// A row passes when the Poisson mean does not exceed the random-cluster mean
/// by more than `max_sigmas` combined standard errors.
inline DominationReport domination_report(const DominationConfig& dom, const std::vector<std::string>& names,
                                          std::span<const DominationReplicate> reps, double max_sigmas = 3.0) {
  if (reps.empty()) throw InvalidArgument("no domination replicates to combine");
  DominationReport report;
  report.config = dom;
  report.pass = true;
  for (std::size_t s = 0; s < names.size(); ++s) {
    std::vector<EstimateWithError> p;
    std::vector<EstimateWithError> q;
    for (const auto& r : reps) {
      p.push_back(r.poisson.at(s));
      q.push_back(r.random_cluster.at(s));
    }
    DominationRow row;
    row.statistic = names[s];
    row.poisson = average_estimates(p);
    row.random_cluster = average_estimates(q);
    row.pass = row.poisson.value <=
               row.random_cluster.value + max_sigmas * combined_std_error(row.poisson, row.random_cluster);
    report.pass = report.pass && row.pass;
    report.rows.push_back(std::move(row));
  }
  return report;
}

/// Compares E[f] under the Poisson process of intensity τzσ with E_RC[f] for
/// each increasing f, over independent replicates.
template <std::size_t D>
DominationReport check_domination(const WRParams<D>& params, const DominationConfig& dom,
                                  const std::vector<IncreasingStatistic<D>>& stats, const MCMCSettings& settings,
                                  std::size_t replicates, Seed seed, double max_sigmas = 3.0) {
  if (replicates == 0) throw InvalidArgument("replicates must be positive");
  std::vector<DominationReplicate> reps;
  for (std::size_t r = 0; r < replicates; ++r) {
    reps.push_back(domination_replicate<D>(params, dom, stats, settings, derive_seed(seed, r)));
  }
  std::vector<std::string> names;
  for (const auto& s : stats) names.push_back(s.name);
  return domination_report(dom, names, reps, max_sigmas);
}

}  // namespace wrlab
