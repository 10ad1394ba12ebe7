#pragma once

// Points, axis-aligned windows and Boolean-model connectivity.
//
// Two points are connected when their closed radius-a balls intersect, i.e.
// when their distance is at most 2a. A point touches the boundary of a window
// when its distance to the topological boundary of the box is at most 2a.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wrlab/errors.hpp"

namespace wrlab {

template <std::size_t D>
using Point = std::array<double, D>;

template <std::size_t D>
inline double distance2(const Point<D>& p, const Point<D>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < D; ++i) {
    const double t = p[i] - q[i];
    s += t * t;
  }
  return s;
}

template <std::size_t D>
inline bool all_finite(const Point<D>& p) {
  return std::all_of(p.begin(), p.end(), [](double v) { return std::isfinite(v); });
}

/// Closed axis-aligned box [lower, upper].
template <std::size_t D>
struct Window {
  Point<D> lower{};
  Point<D> upper{};

  Window() = default;
  Window(const Point<D>& lo, const Point<D>& hi) : lower(lo), upper(hi) {
    for (std::size_t i = 0; i < D; ++i) {
      if (!(std::isfinite(lo[i]) && std::isfinite(hi[i]) && lo[i] < hi[i])) {
        throw InvalidArgument("window requires lower[i] < upper[i] on every axis");
      }
    }
  }

  /// The cube [lo, hi]^D.
  static Window cube(double lo, double hi) {
    Point<D> l;
    Point<D> h;
    l.fill(lo);
    h.fill(hi);
    return Window(l, h);
  }

  double extent(std::size_t axis) const { return upper[axis] - lower[axis]; }

  double volume() const {
    double v = 1.0;
    for (std::size_t i = 0; i < D; ++i) v *= extent(i);
    return v;
  }

  double diameter() const {
    double s = 0.0;
    for (std::size_t i = 0; i < D; ++i) s += extent(i) * extent(i);
    return std::sqrt(s);
  }

  bool contains(const Point<D>& p) const {
    for (std::size_t i = 0; i < D; ++i) {
      if (!(p[i] >= lower[i] && p[i] <= upper[i])) return false;
    }
    return true;
  }

  bool contains(const Window& w) const {
    for (std::size_t i = 0; i < D; ++i) {
      if (w.lower[i] < lower[i] || w.upper[i] > upper[i]) return false;
    }
    return true;
  }

  Window expanded(double margin) const {
    Point<D> l = lower;
    Point<D> h = upper;
    for (std::size_t i = 0; i < D; ++i) {
      l[i] -= margin;
      h[i] += margin;
    }
    return Window(l, h);
  }

  Window translated(const Point<D>& shift) const {
    Point<D> l = lower;
    Point<D> h = upper;
    for (std::size_t i = 0; i < D; ++i) {
      l[i] += shift[i];
      h[i] += shift[i];
    }
    return Window(l, h);
  }

  /// Distance from an interior point to the boundary of the box.
  double distance_to_boundary(const Point<D>& p) const {
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < D; ++i) {
      d = std::min(d, std::min(p[i] - lower[i], upper[i] - p[i]));
    }
    return d;
  }

  /// Euclidean distance from p to the box (0 inside).
  double distance_to(const Point<D>& p) const {
    double s = 0.0;
    for (std::size_t i = 0; i < D; ++i) {
      double t = 0.0;
      if (p[i] < lower[i]) t = lower[i] - p[i];
      else if (p[i] > upper[i]) t = p[i] - upper[i];
      s += t * t;
    }
    return std::sqrt(s);
  }

  bool operator==(const Window&) const = default;
};

/// A finite set of distinct points.
template <std::size_t D>
class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(std::vector<Point<D>> points) : points_(std::move(points)) {
    for (const auto& p : points_) {
      if (!all_finite(p)) throw InvalidArgument("configuration contains a non-finite coordinate");
    }
    std::vector<Point<D>> sorted = points_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw InvalidArgument("configuration contains duplicate points");
    }
  }

  std::span<const Point<D>> points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Point<D>& operator[](std::size_t i) const { return points_[i]; }
  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }

  bool within(const Window<D>& w) const {
    return std::all_of(points_.begin(), points_.end(), [&](const Point<D>& p) { return w.contains(p); });
  }

  /// Copy with one extra point; rejects duplicates.
  Configuration with(const Point<D>& p) const {
    std::vector<Point<D>> pts = points_;
    pts.push_back(p);
    return Configuration(std::move(pts));
  }

  Configuration without(std::size_t index) const {
    std::vector<Point<D>> pts = points_;
    pts.erase(pts.begin() + static_cast<std::ptrdiff_t>(index));
    Configuration c;
    c.points_ = std::move(pts);
    return c;
  }

  Configuration translated(const Point<D>& shift) const {
    Configuration c;
    c.points_.reserve(points_.size());
    for (auto p : points_) {
      for (std::size_t i = 0; i < D; ++i) p[i] += shift[i];
      c.points_.push_back(p);
    }
    return c;
  }

  std::size_t count_in(const Window<D>& w) const {
    return static_cast<std::size_t>(
        std::count_if(points_.begin(), points_.end(), [&](const Point<D>& p) { return w.contains(p); }));
  }

  bool operator==(const Configuration&) const = default;

 private:
  std::vector<Point<D>> points_;
};

struct ConnectivityParams {
  double a = 1.0;
  bool wired = false;
};

/// Union-find with path halving and union by size.
class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n = 0) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t add() {
    parent_.push_back(parent_.size());
    size_.push_back(1);
    return parent_.size() - 1;
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  /// Returns the new root.
  std::size_t unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return a;
  }

  std::size_t size_of(std::size_t x) { return size_[find(x)]; }
  std::size_t size() const { return parent_.size(); }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

/// Uniform bucket grid whose cells are at least `min_side` wide, so every
/// pair within distance `min_side` lies in the same or adjacent cells.
/// Points outside the box are clamped into the border cells.
template <std::size_t D>
class CellGrid {
 public:
  CellGrid() = default;
  CellGrid(const Window<D>& box, double min_side, std::size_t max_cells = std::size_t{1} << 22) : box_(box) {
    if (!(min_side > 0.0)) throw InvalidArgument("cell side must be positive");
    double side = min_side;
    for (;;) {
      std::size_t total = 1;
      for (std::size_t i = 0; i < D; ++i) {
        dims_[i] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(box.extent(i) / side)));
        total *= dims_[i];
      }
      if (total <= max_cells) {
        cells_.assign(total, {});
        break;
      }
      side *= 2.0;
    }
  }

  std::size_t cell_of(const Point<D>& p) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < D; ++i) idx = idx * dims_[i] + coord(p, i);
    return idx;
  }

  void insert(std::uint32_t id, const Point<D>& p) { cells_[cell_of(p)].push_back(id); }

  void erase(std::uint32_t id, const Point<D>& p) {
    auto& c = cells_[cell_of(p)];
    auto it = std::find(c.begin(), c.end(), id);
    if (it != c.end()) {
      *it = c.back();
      c.pop_back();
    }
  }

  /// Replace id `from` by `to` in the cell of p (used when compacting storage).
  void rename(std::uint32_t from, std::uint32_t to, const Point<D>& p) {
    auto& c = cells_[cell_of(p)];
    std::replace(c.begin(), c.end(), from, to);
  }

  void clear() {
    for (auto& c : cells_) c.clear();
  }

  /// Calls fn(id) for every id stored in the 3^D block around p's cell.
  template <typename Fn>
  void for_each_near(const Point<D>& p, Fn&& fn) const {
    std::array<std::size_t, D> center;
    for (std::size_t i = 0; i < D; ++i) center[i] = coord(p, i);
    std::array<int, D> off;
    off.fill(-1);
    for (;;) {
      bool valid = true;
      std::size_t idx = 0;
      for (std::size_t i = 0; i < D; ++i) {
        const long c = static_cast<long>(center[i]) + off[i];
        if (c < 0 || c >= static_cast<long>(dims_[i])) {
          valid = false;
          break;
        }
        idx = idx * dims_[i] + static_cast<std::size_t>(c);
      }
      if (valid) {
        for (std::uint32_t id : cells_[idx]) fn(id);
      }
      std::size_t k = 0;
      while (k < D && off[k] == 1) off[k++] = -1;
      if (k == D) break;
      ++off[k];
    }
  }

 private:
  std::size_t coord(const Point<D>& p, std::size_t i) const {
    const double t = (p[i] - box_.lower[i]) / box_.extent(i) * static_cast<double>(dims_[i]);
    if (!(t > 0.0)) return 0;
    const auto c = static_cast<std::size_t>(t);
    return std::min(c, dims_[i] - 1);
  }

  Window<D> box_{};
  std::array<std::size_t, D> dims_{};
  std::vector<std::vector<std::uint32_t>> cells_;
};

/// Output of build_components. Component ids are assigned in order of the
/// first point that belongs to each component.
struct ComponentLabeling {
  std::vector<std::size_t> label_of;
  std::size_t num_components_free = 0;
  /// C_{∂Λ}: components of B_a(ω ∪ ∂Λ). Always computed; only meaningful when wired.
  std::size_t num_components_wired = 1;
  std::vector<bool> touches_boundary;
  std::vector<std::size_t> component_size;
  bool wired = false;
  double a = 0.0;
};

namespace detail {

template <std::size_t D>
inline void validate_inside(const Configuration<D>& conf, const Window<D>& window) {
  if (!conf.within(window)) throw InvalidArgument("configuration has a point outside the window");
}

inline void validate_radius(double a) {
  if (!(a > 0.0) || !std::isfinite(a)) throw InvalidArgument("radius a must be positive and finite");
}

}  // namespace detail

/// Connected components of the Boolean model B_a(conf), optionally wired to ∂window.
template <std::size_t D>
ComponentLabeling build_components(const Configuration<D>& conf, const ConnectivityParams& params,
                                   const Window<D>& window) {
  detail::validate_radius(params.a);
  detail::validate_inside(conf, window);

  const std::size_t n = conf.size();
  const double reach = 2.0 * params.a;
  const double reach2 = reach * reach;

  DisjointSets sets(n);
  CellGrid<D> grid(window, reach);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = conf[i];
    grid.for_each_near(p, [&](std::uint32_t j) {
      if (distance2(p, conf[j]) <= reach2) sets.unite(i, j);
    });
    grid.insert(static_cast<std::uint32_t>(i), p);
  }

  ComponentLabeling out;
  out.wired = params.wired;
  out.a = params.a;
  out.label_of.assign(n, 0);
  std::vector<std::size_t> root_label(n, static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = sets.find(i);
    if (root_label[r] == static_cast<std::size_t>(-1)) {
      root_label[r] = out.num_components_free++;
      out.touches_boundary.push_back(false);
      out.component_size.push_back(0);
    }
    const std::size_t l = root_label[r];
    out.label_of[i] = l;
    ++out.component_size[l];
    if (window.distance_to_boundary(conf[i]) <= reach) out.touches_boundary[l] = true;
  }
  const auto touching = static_cast<std::size_t>(
      std::count(out.touches_boundary.begin(), out.touches_boundary.end(), true));
  out.num_components_wired = out.num_components_free - touching + 1;
  return out;
}

/// N_{Δ,∂Λ}: points inside delta that share a component with the boundary.
template <std::size_t D>
std::size_t boundary_connected_count(const ComponentLabeling& labeling, const Configuration<D>& conf,
                                     const Window<D>& delta) {
  if (!labeling.wired) throw InvalidArgument("boundary_connected_count needs a wired labeling");
  if (labeling.label_of.size() != conf.size()) throw InvalidArgument("labeling does not match configuration");
  std::size_t count = 0;
  for (std::size_t i = 0; i < conf.size(); ++i) {
    if (labeling.touches_boundary[labeling.label_of[i]] && delta.contains(conf[i])) ++count;
  }
  return count;
}

/// True iff one component reaches within 2a of both faces orthogonal to `axis`.
template <std::size_t D>
bool has_crossing(const ComponentLabeling& labeling, const Configuration<D>& conf, const Window<D>& window,
                  std::size_t axis) {
  if (axis >= D) throw InvalidArgument("crossing axis out of range");
  if (labeling.label_of.size() != conf.size()) throw InvalidArgument("labeling does not match configuration");
  const double reach = 2.0 * labeling.a;
  std::vector<std::uint8_t> flags(labeling.num_components_free, 0);
  for (std::size_t i = 0; i < conf.size(); ++i) {
    auto& f = flags[labeling.label_of[i]];
    if (conf[i][axis] - window.lower[axis] <= reach) f |= 1;
    if (window.upper[axis] - conf[i][axis] <= reach) f |= 2;
    if (f == 3) return true;
  }
  return false;
}

}  // namespace wrlab
