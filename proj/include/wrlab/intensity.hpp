#pragma once

// Environments: deterministic and random intensity measures, their frozen
// realizations, mass evaluation, Poisson sampling and location proposals.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "wrlab/errors.hpp"
#include "wrlab/geometry.hpp"
#include "wrlab/rng.hpp"
#include "wrlab/stats.hpp"
#include "wrlab/voronoi.hpp"

namespace wrlab {

// ---------------------------------------------------------------------------
// Models

/// z0 times Lebesgue measure.
struct HomogeneousLebesgue {
  double z0 = 1.0;
};

/// σ(dx) = density(x) dx with a declared upper bound.
template <std::size_t D>
struct DensityField {
  std::function<double(const Point<D>&)> density;
  double sup_bound = 0.0;
  /// Midpoint-rule cell side for mass integration.
  double integration_step = 0.05;
  std::string name = "density-field";
};

/// G(x) = Σ amplitude·1{|x − X_i| ≤ kernel_radius}, X homogeneous Poisson.
struct ShotNoise {
  double pp_intensity = 1.0;
  double kernel_radius = 1.0;
  double kernel_amplitude = 1.0;
};

/// G(x) = λ1·1_Ξ(x) + λ2·1_{Ξᶜ}(x), Ξ a Poisson-Boolean germ-grain set.
struct RandomSetIndicator {
  double lambda1 = 1.0;
  double lambda2 = 0.0;
  double germ_intensity = 1.0;
  double grain_radius = 1.0;
};

/// Length measure on the edges of a Poisson-Voronoi tessellation (d = 2).
struct VoronoiEdges {
  double seed_intensity = 1.0;
};

/// Length measure on a Poisson-Manhattan grid (d = 2).
struct ManhattanGrid {
  double line_intensity = 1.0;
};

template <std::size_t D>
using IntensityModel =
    std::variant<HomogeneousLebesgue, DensityField<D>, ShotNoise, RandomSetIndicator, VoronoiEdges, ManhattanGrid>;

template <std::size_t D>
std::string model_name(const IntensityModel<D>& model) {
  struct Visitor {
    std::string operator()(const HomogeneousLebesgue&) const { return "lebesgue"; }
    std::string operator()(const DensityField<D>& f) const { return f.name; }
    std::string operator()(const ShotNoise&) const { return "shot-noise"; }
    std::string operator()(const RandomSetIndicator&) const { return "random-set"; }
    std::string operator()(const VoronoiEdges&) const { return "voronoi"; }
    std::string operator()(const ManhattanGrid&) const { return "manhattan"; }
  };
  return std::visit(Visitor{}, model);
}

inline double unit_ball_volume(std::size_t d) {
  return std::pow(std::numbers::pi, double(d) / 2.0) / std::tgamma(double(d) / 2.0 + 1.0);
}

/// E[Σ(A)] / |A| for stationary models.
template <std::size_t D>
double expected_mass_density(const IntensityModel<D>& model) {
  struct Visitor {
    double operator()(const HomogeneousLebesgue& m) const { return m.z0; }
    double operator()(const DensityField<D>&) const {
      throw InvalidArgument("density fields have no stationary mean");
    }
    double operator()(const ShotNoise& m) const {
      return m.pp_intensity * m.kernel_amplitude * unit_ball_volume(D) * std::pow(m.kernel_radius, double(D));
    }
    double operator()(const RandomSetIndicator& m) const {
      const double cover = 1.0 - std::exp(-m.germ_intensity * unit_ball_volume(D) * std::pow(m.grain_radius, double(D)));
      return m.lambda1 * cover + m.lambda2 * (1.0 - cover);
    }
    double operator()(const VoronoiEdges& m) const { return 2.0 * std::sqrt(m.seed_intensity); }
    double operator()(const ManhattanGrid& m) const { return 2.0 * m.line_intensity; }
  };
  return std::visit(Visitor{}, model);
}

/// Guard margin used when the caller does not choose one.
template <std::size_t D>
double default_guard_margin(const IntensityModel<D>& model) {
  struct Visitor {
    double operator()(const HomogeneousLebesgue&) const { return 1.0; }
    double operator()(const DensityField<D>&) const { return 1.0; }
    double operator()(const ShotNoise& m) const { return m.kernel_radius; }
    double operator()(const RandomSetIndicator& m) const { return m.grain_radius; }
    double operator()(const VoronoiEdges& m) const { return 4.0 / std::sqrt(m.seed_intensity); }
    double operator()(const ManhattanGrid&) const { return 1.0; }
  };
  return std::visit(Visitor{}, model);
}

// ---------------------------------------------------------------------------
// Realizations

template <std::size_t D>
struct Segment {
  Point<D> a{};
  Point<D> b{};
  double linear_density = 1.0;
  /// Generating germs when the segment is a Voronoi edge.
  std::optional<std::pair<Point<D>, Point<D>>> sources;

  double length() const { return std::sqrt(distance2(a, b)); }
};

template <std::size_t D>
struct AbsolutelyContinuous {
  std::function<double(const Point<D>&)> density;
  double sup_bound = 0.0;
  /// Set when the density is a known constant (exact mass).
  std::optional<double> constant;
  double integration_step = 0.05;
};

template <std::size_t D>
struct SegmentMeasure {
  std::vector<Segment<D>> segments;
};

struct MassEstimate {
  double value = 0.0;
  double abs_tolerance = 0.0;
};

/// One frozen environment σ, valid on `guard_window`. Immutable once built.
template <std::size_t D>
class EnvironmentRealization {
 public:
  using Kind = std::variant<AbsolutelyContinuous<D>, SegmentMeasure<D>>;

  EnvironmentRealization(Kind kind, Window<D> guard_window, std::string label = {})
      : kind_(std::move(kind)), guard_window_(guard_window), label_(std::move(label)) {
    if (const auto* s = std::get_if<SegmentMeasure<D>>(&kind_)) {
      for (const auto& seg : s->segments) {
        if (!(seg.length() > 0.0)) throw InvalidArgument("segments must have positive length");
        if (!(seg.linear_density >= 0.0)) throw InvalidArgument("linear density must be nonnegative");
      }
    } else {
      const auto& ac = std::get<AbsolutelyContinuous<D>>(kind_);
      if (!(ac.sup_bound >= 0.0)) throw InvalidArgument("sup_bound must be nonnegative");
    }
  }

  static EnvironmentRealization constant(double value, const Window<D>& guard) {
    if (!(value >= 0.0)) throw InvalidArgument("density must be nonnegative");
    AbsolutelyContinuous<D> ac;
    ac.density = [value](const Point<D>&) { return value; };
    ac.sup_bound = value;
    ac.constant = value;
    return EnvironmentRealization(std::move(ac), guard, "lebesgue");
  }

  const Kind& kind() const { return kind_; }
  const Window<D>& guard_window() const { return guard_window_; }
  const std::string& label() const { return label_; }

  bool is_segment_measure() const { return std::holds_alternative<SegmentMeasure<D>>(kind_); }
  const AbsolutelyContinuous<D>* absolutely_continuous() const { return std::get_if<AbsolutelyContinuous<D>>(&kind_); }
  const SegmentMeasure<D>* segment_measure() const { return std::get_if<SegmentMeasure<D>>(&kind_); }

 private:
  Kind kind_;
  Window<D> guard_window_;
  std::string label_;
};

template <std::size_t D>
using SharedEnvironment = std::shared_ptr<const EnvironmentRealization<D>>;

namespace detail {

template <std::size_t D>
void require_inside_guard(const EnvironmentRealization<D>& env, const Window<D>& region) {
  if (!env.guard_window().contains(region)) throw InvalidArgument("region is not inside the guard window");
}

template <std::size_t D>
double midpoint_rule(const std::function<double(const Point<D>&)>& f, const Window<D>& region, double step) {
  std::array<std::size_t, D> cells;
  std::array<double, D> h;
  double cell_volume = 1.0;
  for (std::size_t i = 0; i < D; ++i) {
    cells[i] = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(region.extent(i) / step)));
    h[i] = region.extent(i) / double(cells[i]);
    cell_volume *= h[i];
  }
  std::array<std::size_t, D> idx{};
  double sum = 0.0;
  for (;;) {
    Point<D> x;
    for (std::size_t i = 0; i < D; ++i) x[i] = region.lower[i] + (double(idx[i]) + 0.5) * h[i];
    sum += f(x);
    std::size_t k = 0;
    while (k < D && ++idx[k] == cells[k]) idx[k++] = 0;
    if (k == D) break;
  }
  return sum * cell_volume;
}

template <std::size_t D>
double clipped_length(const Segment<D>& s, const Window<D>& region) {
  const auto c = clip_segment<D>(s.a, s.b, region);
  return c ? std::sqrt(distance2(c->first, c->second)) : 0.0;
}

}  // namespace detail

/// σ(region) with an absolute error bound (0 for exact cases). General
/// densities use the midpoint rule at step h and h/2; the finer value is
/// returned and the difference is the reported tolerance.
template <std::size_t D>
MassEstimate total_mass_with_tolerance(const EnvironmentRealization<D>& env, const Window<D>& region) {
  detail::require_inside_guard(env, region);
  if (const auto* seg = env.segment_measure()) {
    double m = 0.0;
    for (const auto& s : seg->segments) m += s.linear_density * detail::clipped_length(s, region);
    return {m, 0.0};
  }
  const auto& ac = *env.absolutely_continuous();
  if (ac.constant) return {*ac.constant * region.volume(), 0.0};
  double step = ac.integration_step;
  // bound the work at roughly 2^22 evaluations for the fine pass
  double cells = 1.0;
  for (std::size_t i = 0; i < D; ++i) cells *= std::ceil(region.extent(i) / (0.5 * step));
  if (cells > double(1 << 22)) step *= std::pow(cells / double(1 << 22), 1.0 / double(D));
  const double coarse = detail::midpoint_rule<D>(ac.density, region, step);
  const double fine = detail::midpoint_rule<D>(ac.density, region, 0.5 * step);
  return {fine, std::abs(fine - coarse)};
}

template <std::size_t D>
double total_mass(const EnvironmentRealization<D>& env, const Window<D>& region) {
  return total_mass_with_tolerance(env, region).value;
}

/// Poisson configuration with intensity z·σ restricted to `window`.
template <std::size_t D>
Configuration<D> sample_poisson(const EnvironmentRealization<D>& env, const Window<D>& window, double z, Rng& rng) {
  if (!(z >= 0.0) || !std::isfinite(z)) throw InvalidArgument("z must be nonnegative");
  detail::require_inside_guard(env, window);
  std::vector<Point<D>> pts;
  if (z == 0.0) return Configuration<D>();
  if (const auto* seg = env.segment_measure()) {
    for (const auto& s : seg->segments) {
      const auto c = clip_segment<D>(s.a, s.b, window);
      if (!c) continue;
      const double len = std::sqrt(distance2(c->first, c->second));
      const auto n = rng.poisson(z * s.linear_density * len);
      for (std::uint64_t k = 0; k < n; ++k) {
        const double t = rng.uniform();
        Point<D> p;
        for (std::size_t i = 0; i < D; ++i) p[i] = c->first[i] + t * (c->second[i] - c->first[i]);
        pts.push_back(p);
      }
    }
  } else {
    const auto& ac = *env.absolutely_continuous();
    const auto n = rng.poisson(z * ac.sup_bound * window.volume());
    pts.reserve(n);
    for (std::uint64_t k = 0; k < n; ++k) {
      Point<D> p;
      for (std::size_t i = 0; i < D; ++i) p[i] = rng.uniform(window.lower[i], window.upper[i]);
      const double u = rng.uniform();
      if (ac.constant) {
        pts.push_back(p);
        continue;
      }
      const double f = ac.density(p);
      if (f > ac.sup_bound * (1.0 + 1e-12)) throw SupBoundViolation(f, ac.sup_bound);
      if (u * ac.sup_bound < f) pts.push_back(p);
    }
  }
  // exact coincidences have probability zero; drop them rather than abort
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return Configuration<D>(std::move(pts));
}

template <std::size_t D>
Configuration<D> sample_poisson(const EnvironmentRealization<D>& env, const Window<D>& window, double z, Seed seed) {
  Rng rng(seed);
  return sample_poisson(env, window, z, rng);
}

/// Draws from σ restricted to a window, normalized. Built once per (env,
/// window) so that chains can propose births cheaply.
template <std::size_t D>
class LocationSampler {
 public:
  LocationSampler(SharedEnvironment<D> env, const Window<D>& window) : env_(std::move(env)), window_(window) {
    detail::require_inside_guard(*env_, window_);
    if (const auto* seg = env_->segment_measure()) {
      double acc = 0.0;
      for (const auto& s : seg->segments) {
        const auto c = clip_segment<D>(s.a, s.b, window_);
        if (!c) continue;
        const double m = s.linear_density * std::sqrt(distance2(c->first, c->second));
        if (m <= 0.0) continue;
        acc += m;
        pieces_.push_back(*c);
        cumulative_.push_back(acc);
      }
      mass_ = acc;
    } else {
      mass_ = total_mass(*env_, window_);
    }
    if (!(mass_ > 0.0)) throw InvalidArgument("cannot sample a location from a zero-mass environment");
  }

  /// σ(window) as used for birth/death acceptance.
  double mass() const { return mass_; }
  const Window<D>& window() const { return window_; }
  const EnvironmentRealization<D>& environment() const { return *env_; }

  Point<D> operator()(Rng& rng) const {
    if (!pieces_.empty()) {
      const double u = rng.uniform() * cumulative_.back();
      auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
      if (it == cumulative_.end()) --it;
      const auto& [a, b] = pieces_[static_cast<std::size_t>(it - cumulative_.begin())];
      const double t = rng.uniform();
      Point<D> p;
      for (std::size_t i = 0; i < D; ++i) p[i] = a[i] + t * (b[i] - a[i]);
      return p;
    }
    const auto& ac = *env_->absolutely_continuous();
    for (std::size_t attempt = 0; attempt < 100'000'000; ++attempt) {
      Point<D> p;
      for (std::size_t i = 0; i < D; ++i) p[i] = rng.uniform(window_.lower[i], window_.upper[i]);
      const double u = rng.uniform();
      if (ac.constant) return p;
      const double f = ac.density(p);
      if (f > ac.sup_bound * (1.0 + 1e-12)) throw SupBoundViolation(f, ac.sup_bound);
      if (u * ac.sup_bound < f) return p;
    }
    throw RejectionExhausted(100'000'000, 0);
  }

 private:
  SharedEnvironment<D> env_;
  Window<D> window_;
  double mass_ = 0.0;
  std::vector<std::pair<Point<D>, Point<D>>> pieces_;
  std::vector<double> cumulative_;
};

/// One point distributed as σ_window / σ(window).
template <std::size_t D>
Point<D> sample_location(const EnvironmentRealization<D>& env, const Window<D>& window, Seed seed) {
  LocationSampler<D> sampler(std::make_shared<const EnvironmentRealization<D>>(env), window);
  Rng rng(seed);
  return sampler(rng);
}

namespace detail {

template <std::size_t D>
std::vector<Point<D>> uniform_points(const Window<D>& region, double intensity, Rng& rng) {
  const auto n = rng.poisson(intensity * region.volume());
  std::vector<Point<D>> pts(n);
  for (auto& p : pts) {
    for (std::size_t i = 0; i < D; ++i) p[i] = rng.uniform(region.lower[i], region.upper[i]);
  }
  return pts;
}

/// Germs with a lookup grid for radius queries.
template <std::size_t D>
struct GermField {
  std::vector<Point<D>> germs;
  CellGrid<D> grid;
  double radius2;

  GermField(std::vector<Point<D>> g, const Window<D>& region, double radius)
      : germs(std::move(g)), grid(region, radius), radius2(radius * radius) {
    for (std::size_t i = 0; i < germs.size(); ++i) grid.insert(static_cast<std::uint32_t>(i), germs[i]);
  }

  std::size_t count_within(const Point<D>& x) const {
    std::size_t c = 0;
    grid.for_each_near(x, [&](std::uint32_t j) {
      if (distance2(x, germs[j]) <= radius2) ++c;
    });
    return c;
  }

  bool any_within(const Point<D>& x) const { return count_within(x) > 0; }
};

template <std::size_t D>
EnvironmentRealization<D> realize_shot_noise(const ShotNoise& m, const Window<D>& guard, Rng& rng) {
  if (!(m.pp_intensity >= 0.0 && m.kernel_radius > 0.0 && m.kernel_amplitude >= 0.0)) {
    throw InvalidArgument("shot-noise parameters must be nonnegative with a positive kernel radius");
  }
  const Window<D> germ_region = guard.expanded(m.kernel_radius);
  auto field = std::make_shared<const GermField<D>>(uniform_points(germ_region, m.pp_intensity, rng), germ_region,
                                                    m.kernel_radius);
  // any x covered by germ j only sees germs within 2r of germ j
  std::size_t max_overlap = 0;
  {
    const GermField<D> wide(field->germs, germ_region, 2.0 * m.kernel_radius);
    for (const auto& g : field->germs) max_overlap = std::max(max_overlap, wide.count_within(g));
  }
  AbsolutelyContinuous<D> ac;
  const double amp = m.kernel_amplitude;
  ac.density = [field, amp](const Point<D>& x) { return amp * double(field->count_within(x)); };
  ac.sup_bound = amp * double(max_overlap);
  if (field->germs.empty() || amp == 0.0) ac.constant = 0.0;
  ac.integration_step = m.kernel_radius / 4.0;
  return EnvironmentRealization<D>(std::move(ac), guard, "shot-noise");
}

template <std::size_t D>
EnvironmentRealization<D> realize_random_set(const RandomSetIndicator& m, const Window<D>& guard, Rng& rng) {
  if (!(m.lambda1 >= 0.0 && m.lambda2 >= 0.0 && m.germ_intensity >= 0.0 && m.grain_radius > 0.0)) {
    throw InvalidArgument("random-set parameters must be nonnegative with a positive grain radius");
  }
  const Window<D> germ_region = guard.expanded(m.grain_radius);
  auto field = std::make_shared<const GermField<D>>(uniform_points(germ_region, m.germ_intensity, rng), germ_region,
                                                    m.grain_radius);
  AbsolutelyContinuous<D> ac;
  const double l1 = m.lambda1;
  const double l2 = m.lambda2;
  ac.density = [field, l1, l2](const Point<D>& x) { return field->any_within(x) ? l1 : l2; };
  ac.sup_bound = field->germs.empty() ? l2 : std::max(l1, l2);
  if (field->germs.empty() || l1 == l2) ac.constant = field->germs.empty() ? l2 : l1;
  ac.integration_step = m.grain_radius / 4.0;
  return EnvironmentRealization<D>(std::move(ac), guard, "random-set");
}

inline EnvironmentRealization<2> realize_voronoi(const VoronoiEdges& m, const Window<2>& window, double margin,
                                                 Seed seed) {
  if (!(m.seed_intensity > 0.0)) throw InvalidArgument("voronoi seed intensity must be positive");
  for (int attempt = 0; attempt < 8; ++attempt, margin *= 2.0) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    const Window<2> germ_region = window.expanded(margin);
    const auto germs = uniform_points<2>(germ_region, m.seed_intensity, rng);
    auto cut = voronoi_edges_in_window(germs, window, germ_region);
    if (!cut.complete) continue;
    SegmentMeasure<2> sm;
    sm.segments.reserve(cut.edges.size());
    for (const auto& e : cut.edges) sm.segments.push_back({e.a, e.b, 1.0, std::make_pair(e.germ_p, e.germ_q)});
    return EnvironmentRealization<2>(std::move(sm), window, "voronoi");
  }
  throw std::runtime_error("voronoi realization incomplete after repeated margin doubling");
}

inline EnvironmentRealization<2> realize_manhattan(const ManhattanGrid& m, const Window<2>& window, double margin,
                                                   Rng& rng) {
  if (!(m.line_intensity >= 0.0)) throw InvalidArgument("line intensity must be nonnegative");
  SegmentMeasure<2> sm;
  for (std::size_t axis = 0; axis < 2; ++axis) {
    const double lo = window.lower[axis] - margin;
    const double hi = window.upper[axis] + margin;
    const auto n = rng.poisson(m.line_intensity * (hi - lo));
    const std::size_t other = 1 - axis;
    for (std::uint64_t k = 0; k < n; ++k) {
      const double t = rng.uniform(lo, hi);
      if (t < window.lower[axis] || t > window.upper[axis]) continue;
      Segment<2> s;
      s.a[axis] = s.b[axis] = t;
      s.a[other] = window.lower[other];
      s.b[other] = window.upper[other];
      sm.segments.push_back(s);
    }
  }
  return EnvironmentRealization<2>(std::move(sm), window, "manhattan");
}

}  // namespace detail

/// Freeze one draw of the model around `window`. The realization is a
/// deterministic function of (model, window, guard_margin, seed).
///
/// Absolutely continuous models are valid on window ⊕ guard_margin (germs are
/// drawn on a further kernel/grain-radius collar). Segment models are valid on
/// the window itself; germs or lines are drawn on window ⊕ guard_margin, and
/// the Voronoi margin is doubled until every cell meeting the window is
/// certified complete.
template <std::size_t D>
EnvironmentRealization<D> realize_environment(const IntensityModel<D>& model, const Window<D>& window,
                                              double guard_margin, Seed seed) {
  if (!(guard_margin > 0.0) || !std::isfinite(guard_margin)) throw InvalidArgument("guard_margin must be positive");
  const Window<D> guard = window.expanded(guard_margin);
  Rng rng(seed);
  if (const auto* m = std::get_if<HomogeneousLebesgue>(&model)) {
    return EnvironmentRealization<D>::constant(m->z0, guard);
  }
  if (const auto* m = std::get_if<DensityField<D>>(&model)) {
    if (!m->density) throw InvalidArgument("density field without a density function");
    // spot-check the declared bound
    for (int k = 0; k < 256; ++k) {
      Point<D> p;
      for (std::size_t i = 0; i < D; ++i) p[i] = rng.uniform(guard.lower[i], guard.upper[i]);
      const double f = m->density(p);
      if (!(f >= 0.0)) throw InvalidArgument("density must be nonnegative");
      if (f > m->sup_bound) throw SupBoundViolation(f, m->sup_bound);
    }
    AbsolutelyContinuous<D> ac;
    ac.density = m->density;
    ac.sup_bound = m->sup_bound;
    ac.integration_step = m->integration_step;
    return EnvironmentRealization<D>(std::move(ac), guard, m->name);
  }
  if (const auto* m = std::get_if<ShotNoise>(&model)) return detail::realize_shot_noise<D>(*m, guard, rng);
  if (const auto* m = std::get_if<RandomSetIndicator>(&model)) return detail::realize_random_set<D>(*m, guard, rng);
  if constexpr (D == 2) {
    if (const auto* m = std::get_if<VoronoiEdges>(&model)) return detail::realize_voronoi(*m, window, guard_margin, seed);
    if (const auto* m = std::get_if<ManhattanGrid>(&model)) {
      return detail::realize_manhattan(*m, window, guard_margin, rng);
    }
  }
  throw InvalidArgument(model_name<D>(model) + " environments are only available in d = 2");
}

template <std::size_t D>
SharedEnvironment<D> realize_shared(const IntensityModel<D>& model, const Window<D>& window, double guard_margin,
                                    Seed seed) {
  return std::make_shared<const EnvironmentRealization<D>>(realize_environment(model, window, guard_margin, seed));
}

struct CovariancePoint {
  double separation = 0.0;
  double covariance = 0.0;
  double std_error = 0.0;
};

/// Cov(Σ(Q), Σ(Q + s·e₁)) for Q = [0, box_size]^D, estimated over independent
/// environment draws. The standard error is that of the mean of centered
/// products.
template <std::size_t D>
std::vector<CovariancePoint> covariance_decay_probe(const IntensityModel<D>& model, double box_size,
                                                    const std::vector<double>& separations, std::size_t replicates,
                                                    Seed seed) {
  if (replicates < 2) throw InvalidArgument("covariance probe needs at least 2 replicates");
  if (!(box_size > 0.0)) throw InvalidArgument("box size must be positive");
  if (separations.empty()) return {};
  const double s_max = *std::max_element(separations.begin(), separations.end());
  if (*std::min_element(separations.begin(), separations.end()) < 0.0) {
    throw InvalidArgument("separations must be nonnegative");
  }
  Point<D> lo{};
  Point<D> hi;
  hi.fill(box_size);
  hi[0] = box_size + s_max;
  const Window<D> span(lo, hi);
  const Window<D> base = Window<D>::cube(0.0, box_size);
  const double margin = default_guard_margin<D>(model);

  std::vector<double> first(replicates);
  std::vector<std::vector<double>> shifted(separations.size(), std::vector<double>(replicates));
  for (std::size_t r = 0; r < replicates; ++r) {
    const auto env = realize_environment<D>(model, span, margin, derive_seed(seed, r));
    first[r] = total_mass(env, base);
    for (std::size_t k = 0; k < separations.size(); ++k) {
      Point<D> shift{};
      shift[0] = separations[k];
      shifted[k][r] = total_mass(env, base.translated(shift));
    }
  }
  std::vector<CovariancePoint> out;
  const double mx = mean_of(first);
  for (std::size_t k = 0; k < separations.size(); ++k) {
    const double my = mean_of(shifted[k]);
    std::vector<double> prod(replicates);
    for (std::size_t r = 0; r < replicates; ++r) prod[r] = (first[r] - mx) * (shifted[k][r] - my);
    const double n = double(replicates);
    const double cov = std::accumulate(prod.begin(), prod.end(), 0.0) / (n - 1.0);
    const double se = std::sqrt(sample_variance(prod) / n);
    out.push_back({separations[k], cov, se});
  }
  return out;
}

}  // namespace wrlab
