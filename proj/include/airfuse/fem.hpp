#pragma once

#include <cmath>
#include <stdexcept>

#include "airfuse/mesh.hpp"
#include "airfuse/sparse_utils.hpp"

namespace airfuse {

// P1 finite-element matrices on the mesh: lumped mass C (diagonal, entry =
// sum of incident triangle areas / 3) and stiffness G (row sums zero).
inline void fem_matrices(const TriangleMesh& mesh, SpMat& c_lumped, SpMat& g_stiff) {
  const int n = mesh.num_nodes();
  Vec c = Vec::Zero(n);
  std::vector<Triplet> gt;
  gt.reserve(9 * mesh.triangles.size());
  for (const auto& tri : mesh.triangles) {
    const Point2D& p0 = mesh.nodes[tri[0]];
    const Point2D& p1 = mesh.nodes[tri[1]];
    const Point2D& p2 = mesh.nodes[tri[2]];
    const double area2 = orient2d(p0, p1, p2);
    if (!(area2 > 0.0)) throw std::runtime_error("fem_matrices: zero-area triangle");
    const double area = 0.5 * area2;
    for (int k = 0; k < 3; ++k) c[tri[k]] += area / 3.0;
    // gradient coefficients of the linear basis functions
    const double b[3] = {p1.y - p2.y, p2.y - p0.y, p0.y - p1.y};
    const double cc[3] = {p2.x - p1.x, p0.x - p2.x, p1.x - p0.x};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        gt.emplace_back(tri[i], tri[j], (b[i] * b[j] + cc[i] * cc[j]) / (4.0 * area));
  }
  c_lumped = SpMat(n, n);
  std::vector<Triplet> ct;
  ct.reserve(n);
  for (int i = 0; i < n; ++i) ct.emplace_back(i, i, c[i]);
  c_lumped.setFromTriplets(ct.begin(), ct.end());
  g_stiff = SpMat(n, n);
  g_stiff.setFromTriplets(gt.begin(), gt.end());
}

// GMRF precision of the FEM-discretized Matern solution (alpha = 2):
//   Q = tau^2 (kappa^4 C + 2 kappa^2 G + G C^{-1} G)
// with C lumped so C^{-1} is diagonal and Q stays sparse.
inline SpMat spde_precision(const SpMat& c_lumped, const SpMat& g_stiff, double log_tau,
                            double log_kappa) {
  if (!std::isfinite(log_tau) || !std::isfinite(log_kappa))
    throw std::invalid_argument("spde_precision: non-finite parameters");
  const double tau2 = std::exp(2.0 * log_tau);
  const double k2 = std::exp(2.0 * log_kappa);
  const int n = static_cast<int>(c_lumped.rows());
  Vec cinv(n);
  for (int i = 0; i < n; ++i) {
    const double ci = c_lumped.coeff(i, i);
    if (!(ci > 0.0)) throw std::invalid_argument("spde_precision: C diagonal must be positive");
    cinv[i] = 1.0 / ci;
  }
  SpMat gcg = g_stiff * cinv.asDiagonal() * g_stiff;
  SpMat q = (k2 * k2) * c_lumped + (2.0 * k2) * g_stiff + gcg;
  q *= tau2;
  return q;
}

}  // namespace airfuse
