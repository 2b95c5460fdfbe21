#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <stdexcept>
#include <vector>

namespace airfuse {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline bool is_symmetric(const SpMat& q, double rel_tol = 1e-12) {
  SpMat d = SpMat(q.transpose()) - q;
  const double scale = q.coeffs().size() > 0 ? q.coeffs().cwiseAbs().maxCoeff() : 0.0;
  for (int k = 0; k < d.outerSize(); ++k)
    for (SpMat::InnerIterator it(d, k); it; ++it)
      if (std::abs(it.value()) > rel_tol * std::max(1.0, scale)) return false;
  return true;
}

// Block diagonal with k copies of q; conditionally independent replicates
// sharing hyperparameters.
inline SpMat replicate_block(const SpMat& q, int k) {
  if (k < 1) throw std::invalid_argument("replicate_block: k must be >= 1");
  if (k == 1) return q;
  const int n = static_cast<int>(q.rows());
  SpMat out(n * k, n * k);
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(q.nonZeros()) * k);
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < q.outerSize(); ++c)
      for (SpMat::InnerIterator it(q, c); it; ++it)
        trips.emplace_back(r * n + static_cast<int>(it.row()), r * n + static_cast<int>(it.col()),
                           it.value());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

// Precision of a separable field: Q_time (x) Q_space, indexed time-major
// (entry t*n_space + s).
inline SpMat kronecker_precision(const SpMat& q_time, const SpMat& q_space,
                                 std::int64_t max_dim = 2'000'000) {
  const std::int64_t nt = q_time.rows(), ns = q_space.rows();
  if (nt * ns > max_dim) throw std::invalid_argument("kronecker_precision: dimension cap exceeded");
  SpMat out(nt * ns, nt * ns);
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(q_time.nonZeros()) * q_space.nonZeros());
  for (int ct = 0; ct < q_time.outerSize(); ++ct)
    for (SpMat::InnerIterator t(q_time, ct); t; ++t)
      for (int cs = 0; cs < q_space.outerSize(); ++cs)
        for (SpMat::InnerIterator s(q_space, cs); s; ++s)
          trips.emplace_back(static_cast<int>(t.row() * ns + s.row()),
                             static_cast<int>(t.col() * ns + s.col()), t.value() * s.value());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

inline SpMat sparse_from_dense(const Mat& m, double drop_tol = 0.0) {
  SpMat out(m.rows(), m.cols());
  std::vector<Triplet> trips;
  for (int j = 0; j < m.cols(); ++j)
    for (int i = 0; i < m.rows(); ++i)
      if (std::abs(m(i, j)) > drop_tol) trips.emplace_back(i, j, m(i, j));
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

inline SpMat sparse_identity(int n, double value = 1.0) {
  SpMat out(n, n);
  out.setIdentity();
  if (value != 1.0) out *= value;
  return out;
}

// Places `block` on the diagonal of a larger matrix at `offset`.
inline void append_block_triplets(std::vector<Triplet>& trips, const SpMat& block, int offset) {
  for (int c = 0; c < block.outerSize(); ++c)
    for (SpMat::InnerIterator it(block, c); it; ++it)
      trips.emplace_back(offset + static_cast<int>(it.row()), offset + static_cast<int>(it.col()),
                         it.value());
}

}  // namespace airfuse
