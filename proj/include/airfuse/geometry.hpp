#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace airfuse {

// Planar coordinates in km (easting, northing).
struct Point2D {
  double x = 0.0;
  double y = 0.0;
};

inline bool finite(const Point2D& p) { return std::isfinite(p.x) && std::isfinite(p.y); }

inline double dist(const Point2D& a, const Point2D& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Twice the signed area of triangle (a,b,c); positive for counterclockwise.
inline double orient2d(const Point2D& a, const Point2D& b, const Point2D& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

inline double point_segment_distance(const Point2D& p, const Point2D& a, const Point2D& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0.0) return dist(p, a);
  double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
  t = std::fmax(0.0, std::fmin(1.0, t));
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

inline bool segments_properly_intersect(const Point2D& a, const Point2D& b, const Point2D& c,
                                        const Point2D& d) {
  const double d1 = orient2d(c, d, a);
  const double d2 = orient2d(c, d, b);
  const double d3 = orient2d(a, b, c);
  const double d4 = orient2d(a, b, d);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

// Closed polygon, vertices in order, no repeated last point.
struct Polygon {
  std::vector<Point2D> vertices;

  static Polygon rectangle(double x0, double y0, double x1, double y1) {
    return Polygon{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}};
  }

  bool is_simple() const {
    const int n = static_cast<int>(vertices.size());
    if (n < 3) return false;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
        if (segments_properly_intersect(vertices[i], vertices[(i + 1) % n], vertices[j],
                                        vertices[(j + 1) % n]))
          return false;
      }
    }
    return true;
  }

  // Boundary points count as inside.
  bool contains(const Point2D& p, double tol = 1e-9) const {
    const int n = static_cast<int>(vertices.size());
    for (int i = 0; i < n; ++i) {
      if (point_segment_distance(p, vertices[i], vertices[(i + 1) % n]) <= tol) return true;
    }
    bool in = false;
    for (int i = 0, j = n - 1; i < n; j = i++) {
      const Point2D& a = vertices[i];
      const Point2D& b = vertices[j];
      if ((a.y > p.y) != (b.y > p.y)) {
        const double xi = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
        if (p.x < xi) in = !in;
      }
    }
    return in;
  }

  void bounding_box(double& x0, double& y0, double& x1, double& y1) const {
    x0 = y0 = std::numeric_limits<double>::infinity();
    x1 = y1 = -std::numeric_limits<double>::infinity();
    for (const auto& v : vertices) {
      x0 = std::fmin(x0, v.x);
      y0 = std::fmin(y0, v.y);
      x1 = std::fmax(x1, v.x);
      y1 = std::fmax(y1, v.y);
    }
  }
};

}  // namespace airfuse
