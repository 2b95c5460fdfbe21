#pragma once

#include <stdexcept>

#include "airfuse/sparse_utils.hpp"

namespace airfuse {

// First-order random walk increment precision Q = (1/sigma2) * D'D with D the
// first-difference matrix. Rank n-1: callers must pair the block with one
// sum-to-zero constraint per replicate (handled at assembly/solve time).
inline SpMat rw1_precision(int n, double sigma2) {
  if (n < 2) throw std::invalid_argument("rw1_precision: n must be >= 2");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("rw1_precision: sigma2 must be positive");
  const double w = 1.0 / sigma2;
  std::vector<Triplet> trips;
  trips.reserve(3 * static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double d = (i == 0 || i == n - 1) ? 1.0 : 2.0;
    trips.emplace_back(i, i, w * d);
    if (i + 1 < n) {
      trips.emplace_back(i, i + 1, -w);
      trips.emplace_back(i + 1, i, -w);
    }
  }
  SpMat q(n, n);
  q.setFromTriplets(trips.begin(), trips.end());
  return q;
}

// Stationary AR(1) precision parameterized by the marginal variance; the
// tridiagonal entries use the innovation variance sigma2_marginal*(1-rho^2).
inline SpMat ar1_precision(int n, double rho_ar, double sigma2_marginal) {
  if (!(std::abs(rho_ar) < 1.0)) throw std::invalid_argument("ar1_precision: |rho| must be < 1");
  if (!(sigma2_marginal > 0.0))
    throw std::invalid_argument("ar1_precision: marginal variance must be positive");
  if (n < 1) throw std::invalid_argument("ar1_precision: n must be >= 1");
  const double innov = sigma2_marginal * (1.0 - rho_ar * rho_ar);
  const double w = 1.0 / innov;
  std::vector<Triplet> trips;
  trips.reserve(3 * static_cast<std::size_t>(n));
  if (n == 1) {
    trips.emplace_back(0, 0, 1.0 / sigma2_marginal);
  } else {
    for (int i = 0; i < n; ++i) {
      const double d = (i == 0 || i == n - 1) ? 1.0 : 1.0 + rho_ar * rho_ar;
      trips.emplace_back(i, i, w * d);
      if (i + 1 < n) {
        trips.emplace_back(i, i + 1, -w * rho_ar);
        trips.emplace_back(i + 1, i, -w * rho_ar);
      }
    }
  }
  SpMat q(n, n);
  q.setFromTriplets(trips.begin(), trips.end());
  return q;
}

}  // namespace airfuse
