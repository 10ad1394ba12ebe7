#pragma once

// Planar Poisson-Voronoi edges restricted to a window.
//
// Sites are snapped to a dyadic grid so that they can be handed to
// Boost.Polygon's exact-predicate Voronoi builder; the snapped coordinates are
// the ones returned as generating germs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <boost/polygon/voronoi.hpp>

#include "wrlab/geometry.hpp"

namespace wrlab {

/// Portion of the segment [p, q] inside the box, or nullopt (Liang-Barsky).
template <std::size_t D>
std::optional<std::pair<Point<D>, Point<D>>> clip_segment(const Point<D>& p, const Point<D>& q,
                                                          const Window<D>& box) {
  double t0 = 0.0;
  double t1 = 1.0;
  for (std::size_t i = 0; i < D; ++i) {
    const double dir = q[i] - p[i];
    if (dir == 0.0) {
      if (p[i] < box.lower[i] || p[i] > box.upper[i]) return std::nullopt;
      continue;
    }
    double ta = (box.lower[i] - p[i]) / dir;
    double tb = (box.upper[i] - p[i]) / dir;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  Point<D> a;
  Point<D> b;
  for (std::size_t i = 0; i < D; ++i) {
    const double dir = q[i] - p[i];
    a[i] = std::clamp(p[i] + t0 * dir, box.lower[i], box.upper[i]);
    b[i] = std::clamp(p[i] + t1 * dir, box.lower[i], box.upper[i]);
  }
  return std::make_pair(a, b);
}

struct VoronoiEdge {
  Point<2> a;
  Point<2> b;
  /// The two germs whose bisector carries the edge.
  Point<2> germ_p;
  Point<2> germ_q;
};

struct VoronoiWindowEdges {
  std::vector<VoronoiEdge> edges;
  std::vector<Point<2>> germs;
  /// False when some cell meeting the window could be altered by germs
  /// outside the germ region.
  bool complete = true;
};

namespace detail {

struct DyadicSnap {
  Point<2> center;
  double scale;

  explicit DyadicSnap(const Window<2>& region) {
    center = {0.5 * (region.lower[0] + region.upper[0]), 0.5 * (region.lower[1] + region.upper[1])};
    const double half = 0.5 * std::max(region.extent(0), region.extent(1));
    // keep |snapped| below 2^29 so that Boost's 32-bit input type never overflows
    scale = std::ldexp(1.0, static_cast<int>(std::floor(std::log2(double(1 << 29) / half))));
  }

  std::int32_t to_int(double x, std::size_t axis) const {
    return static_cast<std::int32_t>(std::llround((x - center[axis]) * scale));
  }
  double to_real(double v, std::size_t axis) const { return center[axis] + v / scale; }
};

/// Distance from y to the complement of the region box (0 outside it).
inline double clearance(const Point<2>& y, const Window<2>& region) {
  double c = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < 2; ++i) c = std::min({c, y[i] - region.lower[i], region.upper[i] - y[i]});
  return std::max(0.0, c);
}

}  // namespace detail

/// Voronoi edges of `germs` clipped to `window`, with a completeness check:
/// every vertex of every (cell ∩ window) polygon must be at least as close to
/// its own germ as to the outside of `germ_region`. Since |y − g| is convex and
/// the clearance is concave on the box, this certifies the whole cell piece.
inline VoronoiWindowEdges voronoi_edges_in_window(std::span<const Point<2>> raw_germs, const Window<2>& window,
                                                  const Window<2>& germ_region) {
  namespace bp = boost::polygon;
  const detail::DyadicSnap snap(germ_region);

  std::vector<std::pair<std::int32_t, std::int32_t>> keys;
  keys.reserve(raw_germs.size());
  for (const auto& g : raw_germs) keys.emplace_back(snap.to_int(g[0], 0), snap.to_int(g[1], 1));
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  VoronoiWindowEdges out;
  std::vector<bp::point_data<std::int32_t>> sites;
  sites.reserve(keys.size());
  for (const auto& [x, y] : keys) {
    sites.emplace_back(x, y);
    out.germs.push_back({snap.to_real(x, 0), snap.to_real(y, 1)});
  }

  const auto corner_ok = [&](const Point<2>& y) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& g : out.germs) best = std::min(best, distance2(y, g));
    return std::sqrt(best) <= detail::clearance(y, germ_region);
  };
  for (int mask = 0; mask < 4; ++mask) {
    const Point<2> c = {(mask & 1) ? window.upper[0] : window.lower[0], (mask & 2) ? window.upper[1] : window.lower[1]};
    if (!corner_ok(c)) out.complete = false;
  }
  if (sites.size() < 2) return out;

  bp::voronoi_diagram<double> vd;
  bp::construct_voronoi(sites.begin(), sites.end(), &vd);

  const double far = 4.0 * germ_region.diameter() * snap.scale;
  for (const auto& edge : vd.edges()) {
    const auto* twin = edge.twin();
    if (&edge > twin) continue;
    const std::size_t ip = edge.cell()->source_index();
    const std::size_t iq = twin->cell()->source_index();
    const auto& sp = sites[ip];
    const auto& sq = sites[iq];

    // endpoints in snapped coordinates
    const double mx = 0.5 * (double(bp::x(sp)) + double(bp::x(sq)));
    const double my = 0.5 * (double(bp::y(sp)) + double(bp::y(sq)));
    double dx = double(bp::y(sp)) - double(bp::y(sq));
    double dy = double(bp::x(sq)) - double(bp::x(sp));
    const double len = std::hypot(dx, dy);
    dx /= len;
    dy /= len;
    Point<2> a;
    Point<2> b;
    if (edge.vertex0()) a = {edge.vertex0()->x(), edge.vertex0()->y()};
    else a = {mx - dx * far, my - dy * far};
    if (edge.vertex1()) b = {edge.vertex1()->x(), edge.vertex1()->y()};
    else b = {mx + dx * far, my + dy * far};
    a = {snap.to_real(a[0], 0), snap.to_real(a[1], 1)};
    b = {snap.to_real(b[0], 0), snap.to_real(b[1], 1)};

    const auto clipped = clip_segment<2>(a, b, window);
    if (!clipped) continue;
    VoronoiEdge e{clipped->first, clipped->second, out.germs[ip], out.germs[iq]};
    for (const auto& y : {e.a, e.b}) {
      if (std::sqrt(distance2(y, e.germ_p)) > detail::clearance(y, germ_region)) out.complete = false;
    }
    if (distance2(e.a, e.b) > 0.0) out.edges.push_back(e);
  }
  return out;
}

}  // namespace wrlab
