#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace skillworld::pinball {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Convex polygon with counter-clockwise vertices.
struct Polygon {
  std::vector<Vec2> v;

  std::size_t size() const { return v.size(); }
  Vec2 edge_start(std::size_t i) const { return v[i]; }
  Vec2 edge_end(std::size_t i) const { return v[(i + 1) % v.size()]; }
  Vec2 outward_normal(std::size_t i) const {
    const Vec2 e = edge_end(i) - edge_start(i);
    const double l = norm(e);
    return {e.y / l, -e.x / l};
  }
};

/// Reorders to counter-clockwise and rejects non-convex or degenerate input.
inline Polygon make_polygon(std::vector<Vec2> pts) {
  if (pts.size() < 3) throw std::invalid_argument("polygon needs at least 3 vertices");
  double area2 = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) area2 += cross(pts[i], pts[(i + 1) % pts.size()]);
  if (area2 == 0.0) throw std::invalid_argument("degenerate polygon");
  if (area2 < 0.0) std::reverse(pts.begin(), pts.end());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec2 a = pts[i], b = pts[(i + 1) % pts.size()], c = pts[(i + 2) % pts.size()];
    if (cross(b - a, c - b) <= 0.0) throw std::invalid_argument("polygon is not strictly convex");
  }
  return Polygon{std::move(pts)};
}

inline bool point_in_polygon(const Polygon& p, Vec2 q) {
  for (std::size_t i = 0; i < p.size(); ++i)
    if (cross(p.edge_end(i) - p.edge_start(i), q - p.edge_start(i)) < 0.0) return false;
  return true;
}

inline double point_segment_distance(Vec2 q, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double l2 = dot(ab, ab);
  double t = l2 > 0.0 ? dot(q - a, ab) / l2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(q - (a + ab * t));
}

inline bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 && d4 != 0;
}

inline double segment_segment_distance(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  if (segments_intersect(a, b, c, d)) return 0.0;
  return std::min({point_segment_distance(a, c, d), point_segment_distance(b, c, d),
                   point_segment_distance(c, a, b), point_segment_distance(d, a, b)});
}

inline double point_polygon_distance(const Polygon& p, Vec2 q) {
  if (point_in_polygon(p, q)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i)
    best = std::min(best, point_segment_distance(q, p.edge_start(i), p.edge_end(i)));
  return best;
}

inline double segment_polygon_distance(const Polygon& p, Vec2 a, Vec2 b) {
  if (point_in_polygon(p, a) || point_in_polygon(p, b)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i)
    best = std::min(best, segment_segment_distance(a, b, p.edge_start(i), p.edge_end(i)));
  return best;
}

struct Contact {
  double t = 0.0;  // fraction of the displacement at first contact
  Vec2 normal;     // unit normal pointing away from the surface
};

/// First contact of a disc of radius r whose center moves from p by d with
/// the polygon; only approaching contacts count.
inline std::optional<Contact> sweep_polygon(const Polygon& poly, Vec2 p, Vec2 d, double r) {
  std::optional<Contact> best;
  auto consider = [&](double t, Vec2 n) {
    if (t < 0.0 || t > 1.0) return;
    if (!best || t < best->t) best = Contact{t, n};
  };
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 a = poly.edge_start(i), b = poly.edge_end(i);
    const Vec2 n = poly.outward_normal(i);
    const double dn = dot(d, n);
    if (dn < 0.0) {
      const double h = dot(p - a, n);
      if (h >= r - 1e-12) {
        const double t = (r - h) / dn;
        const Vec2 c = p + d * t;
        const Vec2 e = b - a;
        const double u = dot(c - a, e) / dot(e, e);
        if (u >= 0.0 && u <= 1.0) consider(std::max(t, 0.0), n);
      }
    }
    // Vertex cap: |p + t d - a| = r.
    const Vec2 w = p - a;
    const double A = dot(d, d), B = dot(w, d), C = dot(w, w) - r * r;
    if (A > 0.0 && B < 0.0 && C >= -1e-12) {
      const double disc = B * B - A * C;
      if (disc >= 0.0) {
        const double t = std::max((-B - std::sqrt(disc)) / A, 0.0);
        const Vec2 c = p + d * t;
        const Vec2 nn = c - a;
        const double l = norm(nn);
        if (l > 0.0) consider(t, nn * (1.0 / l));
      }
    }
  }
  return best;
}

/// First contact with the walls of the unit square shrunk by r.
inline std::optional<Contact> sweep_walls(Vec2 p, Vec2 d, double r) {
  std::optional<Contact> best;
  auto consider = [&](double t, Vec2 n) {
    t = std::max(t, 0.0);
    if (t > 1.0) return;
    if (!best || t < best->t) best = Contact{t, n};
  };
  if (d.x < 0.0) consider((r - p.x) / d.x, {1.0, 0.0});
  if (d.x > 0.0) consider((1.0 - r - p.x) / d.x, {-1.0, 0.0});
  if (d.y < 0.0) consider((r - p.y) / d.y, {0.0, 1.0});
  if (d.y > 0.0) consider((1.0 - r - p.y) / d.y, {0.0, -1.0});
  return best;
}

}  // namespace skillworld::pinball
