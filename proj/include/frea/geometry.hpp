#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace frea {

constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
  bool operator==(const Vec2& o) const { return x == o.x && y == o.y; }
};

inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
inline double norm(const Vec2& a) { return std::hypot(a.x, a.y); }
inline double distance(const Vec2& a, const Vec2& b) { return norm(a - b); }
inline Vec2 heading_vec(double yaw) { return {std::cos(yaw), std::sin(yaw)}; }
inline Vec2 rotate(const Vec2& v, double ang) {
  const double c = std::cos(ang), s = std::sin(ang);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Normalizes an angle into (-pi, pi].
inline double normalize_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

// ---------------------------------------------------------------------------
// Oriented rectangles (vehicle footprints)
// ---------------------------------------------------------------------------

struct OrientedBox {
  Vec2 center;
  double yaw = 0.0;
  double half_length = 1.0;  // extent along heading
  double half_width = 1.0;

  std::array<Vec2, 4> corners() const {
    const Vec2 u = heading_vec(yaw);
    const Vec2 v{-u.y, u.x};
    const Vec2 du = u * half_length;
    const Vec2 dv = v * half_width;
    return {center + du + dv, center - du + dv, center - du - dv, center + du - dv};
  }

  bool contains(const Vec2& p) const {
    const Vec2 d = p - center;
    const Vec2 u = heading_vec(yaw);
    return std::abs(dot(d, u)) <= half_length &&
           std::abs(cross(u, d)) <= half_width;
  }
};

/// Distance from a point to an oriented rectangle (0 inside).
inline double point_box_distance(const Vec2& p, const OrientedBox& b) {
  const Vec2 d = p - b.center;
  const Vec2 u = heading_vec(b.yaw);
  const double lx = dot(d, u);
  const double ly = cross(u, d);
  const double dx = std::max(std::abs(lx) - b.half_length, 0.0);
  const double dy = std::max(std::abs(ly) - b.half_width, 0.0);
  return std::hypot(dx, dy);
}

/// Closest-point distance between segments [p1,p2] and [q1,q2].
inline double segment_distance(const Vec2& p1, const Vec2& p2,
                               const Vec2& q1, const Vec2& q2) {
  const Vec2 d1 = p2 - p1;
  const Vec2 d2 = q2 - q1;
  const Vec2 r = p1 - q1;
  const double a = dot(d1, d1);
  const double e = dot(d2, d2);
  const double f = dot(d2, r);

  double s = 0.0, t = 0.0;
  if (a <= 1e-18 && e <= 1e-18) {
    return norm(r);
  }
  if (a <= 1e-18) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = dot(d1, r);
    if (e <= 1e-18) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = dot(d1, d2);
      const double denom = a * e - b * b;
      if (denom > 1e-18) {
        s = std::clamp((b * f - c * e) / denom, 0.0, 1.0);
      }
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  const Vec2 cp = p1 + d1 * s;
  const Vec2 cq = q1 + d2 * t;
  return distance(cp, cq);
}

inline bool segments_intersect(const Vec2& p1, const Vec2& p2,
                               const Vec2& q1, const Vec2& q2) {
  const double d1 = cross(q2 - q1, p1 - q1);
  const double d2 = cross(q2 - q1, p2 - q1);
  const double d3 = cross(p2 - p1, q1 - p1);
  const double d4 = cross(p2 - p1, q2 - p1);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
      ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  // Collinear/touching cases fall through to the distance test.
  return false;
}

/// Minimum gap between two oriented rectangles; exactly 0 when they overlap.
/// Symmetric (the pair is canonically ordered so both argument orders run the
/// same arithmetic) and exact for convex rectangles: the closest pair of
/// points between disjoint convex polygons lies on their edges.
inline double min_box_distance(const OrientedBox& a, const OrientedBox& b) {
  const auto key = [](const OrientedBox& x) {
    return std::array<double, 5>{x.center.x, x.center.y, x.yaw, x.half_length,
                                 x.half_width};
  };
  const OrientedBox& p = key(a) <= key(b) ? a : b;
  const OrientedBox& q = key(a) <= key(b) ? b : a;

  if (p.contains(q.center) || q.contains(p.center)) return 0.0;
  const auto cp = p.corners();
  const auto cq = q.corners();
  // Proper edge crossings are decided by sign tests, not distances.
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (segments_intersect(cp[i], cp[(i + 1) % 4], cq[j], cq[(j + 1) % 4]))
        return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double d = segment_distance(cp[i], cp[(i + 1) % 4],
                                        cq[j], cq[(j + 1) % 4]);
      if (d < best) best = d;
      if (best == 0.0) return 0.0;
    }
  }
  return best;
}

inline bool boxes_intersect(const OrientedBox& a, const OrientedBox& b) {
  return min_box_distance(a, b) == 0.0;
}

// ---------------------------------------------------------------------------
// Polylines (lane centerlines, routes)
// ---------------------------------------------------------------------------

class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> pts) : pts_(std::move(pts)) {
    cum_.resize(pts_.size(), 0.0);
    for (size_t i = 1; i < pts_.size(); ++i)
      cum_[i] = cum_[i - 1] + distance(pts_[i - 1], pts_[i]);
  }

  const std::vector<Vec2>& points() const { return pts_; }
  size_t size() const { return pts_.size(); }
  double length() const { return cum_.empty() ? 0.0 : cum_.back(); }

  /// Point at arc length s, clamped to the ends.
  Vec2 point_at(double s) const {
    if (pts_.empty()) return {};
    if (s <= 0.0) return pts_.front();
    if (s >= length()) return pts_.back();
    const size_t i = segment_index(s);
    const double seg = cum_[i + 1] - cum_[i];
    const double t = seg > 0.0 ? (s - cum_[i]) / seg : 0.0;
    return pts_[i] + (pts_[i + 1] - pts_[i]) * t;
  }

  /// Unit tangent at arc length s (direction of the containing segment).
  Vec2 tangent_at(double s) const {
    if (pts_.size() < 2) return {1.0, 0.0};
    const size_t i = segment_index(std::clamp(s, 0.0, length()));
    const Vec2 d = pts_[i + 1] - pts_[i];
    const double n = norm(d);
    return n > 0.0 ? Vec2{d.x / n, d.y / n} : Vec2{1.0, 0.0};
  }

  struct Projection {
    double s = 0.0;       // arc length of the closest point
    double lateral = 0.0; // unsigned lateral offset
  };

  /// Projects p onto the polyline, returning arc length and lateral offset.
  Projection project(const Vec2& p) const {
    Projection best{0.0, std::numeric_limits<double>::infinity()};
    if (pts_.size() == 1) return {0.0, distance(p, pts_[0])};
    for (size_t i = 0; i + 1 < pts_.size(); ++i) {
      const Vec2 d = pts_[i + 1] - pts_[i];
      const double len2 = dot(d, d);
      double t = len2 > 0.0 ? std::clamp(dot(p - pts_[i], d) / len2, 0.0, 1.0) : 0.0;
      const Vec2 q = pts_[i] + d * t;
      const double dist = distance(p, q);
      if (dist < best.lateral) {
        best.lateral = dist;
        best.s = cum_[i] + t * std::sqrt(len2);
      }
    }
    return best;
  }

 private:
  size_t segment_index(double s) const {
    size_t lo = 0, hi = cum_.size() - 1;
    while (lo + 1 < hi) {
      const size_t mid = (lo + hi) / 2;
      if (cum_[mid] <= s) lo = mid; else hi = mid;
    }
    return lo;
  }

  std::vector<Vec2> pts_;
  std::vector<double> cum_;
};

}  // namespace frea
