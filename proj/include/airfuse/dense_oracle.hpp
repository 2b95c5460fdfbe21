#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "airfuse/sparse_utils.hpp"

namespace airfuse {

struct DenseOracleResult {
  Vec mean;
  Mat covariance;
  double log_evidence = 0.0;
};

// Dense covariance-form Gaussian conditioning. This is the verification
// route for the sparse precision-form engine: it never touches sparse
// factorizations, log-determinant identities or the kriging correction.
//   prior cov     = Qp^{-1}, then conditioned on the constraints Cx = 0,
//   predictive    = A Sigma_c A' + diag(noise),
//   posterior     = standard Gaussian conditioning of x on y,
//   log evidence  = log N(y; 0, predictive).
inline DenseOracleResult dense_oracle_posterior(const Mat& a, const Mat& q_prior,
                                                const Mat& constraints, const Vec& y,
                                                const Vec& noise_var,
                                                const std::vector<uint8_t>& masked) {
  const int n = static_cast<int>(q_prior.rows());
  if (n > 500) throw std::invalid_argument("dense_oracle_posterior: latent dimension cap is 500");

  Mat sigma = q_prior.inverse();
  if (constraints.rows() > 0) {
    Mat cs = constraints * sigma;                    // k x n
    Mat gram = cs * constraints.transpose();         // k x k
    sigma -= cs.transpose() * gram.inverse() * cs;   // conditioned on Cx = 0
  }

  std::vector<int> keep;
  for (int r = 0; r < a.rows(); ++r)
    if (masked.empty() || !masked[r]) keep.push_back(r);
  const int m = static_cast<int>(keep.size());
  Mat au(m, n);
  Vec yu(m), vu(m);
  for (int i = 0; i < m; ++i) {
    au.row(i) = a.row(keep[i]);
    yu[i] = y[keep[i]];
    vu[i] = noise_var[keep[i]];
  }

  Mat pred = au * sigma * au.transpose();
  pred.diagonal() += vu;
  Eigen::LLT<Mat> llt(pred);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("dense_oracle_posterior: predictive covariance not PD");

  DenseOracleResult out;
  Mat gain = sigma * au.transpose();  // n x m
  Vec alpha = llt.solve(yu);
  out.mean = gain * alpha;
  out.covariance = sigma - gain * llt.solve(gain.transpose());
  const double logdet = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
  out.log_evidence = -0.5 * m * std::log(2.0 * M_PI) - 0.5 * logdet - 0.5 * yu.dot(alpha);
  return out;
}

}  // namespace airfuse
