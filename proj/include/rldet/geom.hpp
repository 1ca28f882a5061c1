#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace rldet {

inline constexpr double kPi = std::numbers::pi;

struct PointXYZ {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

// Bare coordinate triple used for point-cloud storage and geometry plans.
using Point3 = std::array<double, 3>;

inline double dist2(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// Oriented 3D box: center (x,y,z), extents (l along heading, w, h), yaw theta.
struct Box7 {
  double x = 0.0, y = 0.0, z = 0.0;
  double l = 1.0, w = 1.0, h = 1.0;
  double theta = 0.0;

  void validate() const {
    const double fields[7] = {x, y, z, l, w, h, theta};
    for (double f : fields) {
      if (!std::isfinite(f)) throw std::invalid_argument("Box7: non-finite field");
    }
    if (l <= 0.0 || w <= 0.0 || h <= 0.0)
      throw std::invalid_argument("Box7: extents must be positive");
  }

  double volume() const { return l * w * h; }
  double bev_area() const { return l * w; }
};

// Maps any finite angle into [-pi, pi).
inline double wrap_angle(double theta) {
  if (!std::isfinite(theta)) throw std::invalid_argument("wrap_angle: non-finite input");
  double r = theta - 2.0 * kPi * std::floor((theta + kPi) / (2.0 * kPi));
  if (r >= kPi) r -= 2.0 * kPi;
  if (r < -kPi) r += 2.0 * kPi;
  return r;
}

// Containment with inclusive faces. The relative tolerance absorbs the
// rotation round-trip error for points constructed exactly on a face.
inline bool point_in_box(const PointXYZ& p, const Box7& b) {
  b.validate();
  const double dx = p.x - b.x;
  const double dy = p.y - b.y;
  const double dz = p.z - b.z;
  const double c = std::cos(b.theta);
  const double s = std::sin(b.theta);
  const double lx = c * dx + s * dy;   // rotate by -theta into the box frame
  const double ly = -s * dx + c * dy;
  const double tol = 1e-12;
  return std::abs(lx) <= 0.5 * b.l * (1.0 + tol) + tol &&
         std::abs(ly) <= 0.5 * b.w * (1.0 + tol) + tol &&
         std::abs(dz) <= 0.5 * b.h * (1.0 + tol) + tol;
}

namespace detail {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

inline std::array<Vec2, 4> bev_corners(const Box7& b) {
  const double c = std::cos(b.theta);
  const double s = std::sin(b.theta);
  const double hl = 0.5 * b.l;
  const double hw = 0.5 * b.w;
  // counterclockwise
  const std::array<Vec2, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  std::array<Vec2, 4> out{};
  for (int i = 0; i < 4; ++i) {
    out[i].x = b.x + c * local[i].x - s * local[i].y;
    out[i].y = b.y + s * local[i].x + c * local[i].y;
  }
  return out;
}

inline double polygon_area(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double a = 0.0;
  for (size_t i = 0, n = poly.size(); i < n; ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(a);
}

// Clips poly against the half-plane left of edge a->b (CCW interior).
inline std::vector<Vec2> clip_halfplane(const std::vector<Vec2>& poly, Vec2 a, Vec2 b) {
  std::vector<Vec2> out;
  out.reserve(poly.size() + 2);
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % n];
    const double dp = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    const double dq = (b.x - a.x) * (q.y - a.y) - (b.y - a.y) * (q.x - a.x);
    if (dp >= 0.0) out.push_back(p);
    if ((dp > 0.0 && dq < 0.0) || (dp < 0.0 && dq > 0.0)) {
      const double t = dp / (dp - dq);
      out.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
    }
  }
  return out;
}

// Snap tolerance avoids sliver polygons from nearly-coincident vertices.
inline std::vector<Vec2> dedupe_vertices(std::vector<Vec2> poly, double snap = 1e-12) {
  if (poly.size() < 2) return poly;
  std::vector<Vec2> out;
  out.reserve(poly.size());
  for (const Vec2& v : poly) {
    if (out.empty() || std::abs(out.back().x - v.x) > snap || std::abs(out.back().y - v.y) > snap)
      out.push_back(v);
  }
  while (out.size() > 1 && std::abs(out.front().x - out.back().x) <= snap &&
         std::abs(out.front().y - out.back().y) <= snap)
    out.pop_back();
  return out;
}

inline double bev_intersection_area(const Box7& a, const Box7& b) {
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  std::vector<Vec2> poly(ca.begin(), ca.end());
  for (int e = 0; e < 4 && !poly.empty(); ++e) {
    poly = clip_halfplane(poly, cb[e], cb[(e + 1) % 4]);
  }
  poly = dedupe_vertices(std::move(poly));
  return polygon_area(poly);
}

}  // namespace detail

// Rotated-rectangle IoU in the ground plane.
inline double bev_iou(const Box7& a, const Box7& b) {
  a.validate();
  b.validate();
  const double inter = detail::bev_intersection_area(a, b);
  const double uni = a.bev_area() + b.bev_area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

inline double iou3d(const Box7& a, const Box7& b) {
  a.validate();
  b.validate();
  const double zlo = std::max(a.z - 0.5 * a.h, b.z - 0.5 * b.h);
  const double zhi = std::min(a.z + 0.5 * a.h, b.z + 0.5 * b.h);
  const double dz = std::max(0.0, zhi - zlo);
  if (dz == 0.0) return 0.0;
  const double inter = detail::bev_intersection_area(a, b) * dz;
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

inline double center_distance(const Box7& a, const Box7& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Near-field region in front of the sensor. The extents follow the common
// driving-corridor convention (forward 0..25 m, lateral +-4 m, any height)
// and are overridable in the evaluation config.
struct CorridorBounds {
  double x_min = 0.0;
  double x_max = 25.0;
  double y_half = 4.0;
};

inline bool in_corridor(const Box7& b, const CorridorBounds& c = {}) {
  b.validate();
  return b.x > c.x_min && b.x < c.x_max && std::abs(b.y) < c.y_half;
}

}  // namespace rldet
