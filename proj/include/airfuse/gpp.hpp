#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "airfuse/geometry.hpp"
#include "airfuse/sparse_utils.hpp"

namespace airfuse {

// Exponential correlation exp(-d * phi); phi is a decay, not a range.
inline Mat exp_corr_matrix(const std::vector<Point2D>& pts, double phi) {
  if (!(phi > 0.0)) throw std::invalid_argument("exp_corr_matrix: phi must be positive");
  const int n = static_cast<int>(pts.size());
  Mat h(n, n);
  for (int i = 0; i < n; ++i) {
    h(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      const double v = std::exp(-dist(pts[i], pts[j]) * phi);
      h(i, j) = v;
      h(j, i) = v;
    }
  }
  return h;
}

inline Vec gpp_cross_corr(const std::vector<Point2D>& knots, const Point2D& s, double phi) {
  Vec c(static_cast<Eigen::Index>(knots.size()));
  for (std::size_t k = 0; k < knots.size(); ++k) c[k] = std::exp(-dist(knots[k], s) * phi);
  return c;
}

// Correlation of the predictive process between two locations:
//   corr(s, s') = c*(s)' H^{-1} c*(s')
// which depends on the placement relative to the knots, not just on |s - s'|.
inline double gpp_correlation(const std::vector<Point2D>& knots, const Point2D& s,
                              const Point2D& s_prime, double phi) {
  const Mat h = exp_corr_matrix(knots, phi);
  Eigen::LLT<Mat> llt(h);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("gpp_correlation: singular knot correlation (duplicate knots?)");
  return gpp_cross_corr(knots, s, phi).dot(llt.solve(gpp_cross_corr(knots, s_prime, phi)));
}

// Regular grid of m = nx*ny knots over the bounding box of `pts`, inset by
// half a cell.
inline std::vector<Point2D> regular_knots(const std::vector<Point2D>& pts, int nx, int ny) {
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const auto& p : pts) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  std::vector<Point2D> knots;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      knots.push_back({x0 + (x1 - x0) * (i + 0.5) / nx, y0 + (y1 - y0) * (j + 0.5) / ny});
  return knots;
}

}  // namespace airfuse
