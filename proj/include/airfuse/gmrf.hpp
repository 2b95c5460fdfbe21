#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <stdexcept>
#include <vector>

#include "airfuse/rng.hpp"
#include "airfuse/sparse_utils.hpp"

namespace airfuse {

struct FactorizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Diagonal of Q^{-1} from the sparse Cholesky factor via the Takahashi
// recursions: the partial inverse is computed on the pattern of L only,
// which is closed under the recursion.
inline Vec takahashi_diag(const Eigen::SimplicialLLT<SpMat>& llt, int n) {
  SpMat l = llt.matrixL();
  l.makeCompressed();
  const int* outer = l.outerIndexPtr();
  const int* inner = l.innerIndexPtr();
  const double* lv = l.valuePtr();
  std::vector<double> z(static_cast<std::size_t>(l.nonZeros()), 0.0);

  auto pos_of = [&](int col, int row) -> int {
    int lo = outer[col], hi = outer[col + 1] - 1;
    while (lo <= hi) {
      const int mid = (lo + hi) / 2;
      if (inner[mid] == row) return mid;
      if (inner[mid] < row)
        lo = mid + 1;
      else
        hi = mid - 1;
    }
    return -1;
  };

  for (int j = n - 1; j >= 0; --j) {
    const double ljj = lv[outer[j]];
    for (int ip = outer[j + 1] - 1; ip >= outer[j]; --ip) {
      const int i = inner[ip];
      double s = 0.0;
      for (int kp = outer[j] + 1; kp < outer[j + 1]; ++kp) {
        const int k = inner[kp];
        const int c = std::min(k, i), r = std::max(k, i);
        const int p = pos_of(c, r);
        if (p >= 0) s += lv[kp] * z[static_cast<std::size_t>(p)];
      }
      double v = -s / ljj;
      if (i == j) v += 1.0 / (ljj * ljj);
      z[static_cast<std::size_t>(ip)] = v;
    }
  }

  // undo the fill-reducing permutation: diag(Q^{-1})_i = Z_{p(i),p(i)}
  const auto& perm = llt.permutationP();
  Vec d(n);
  for (int i = 0; i < n; ++i) {
    const int pi = perm.indices()[i];
    d[i] = z[static_cast<std::size_t>(outer[pi])];
  }
  return d;
}

// Exact Gaussian conditional posterior of the latent field given psi, with
// linear constraints Cx = 0 enforced by conditioning by kriging.
class ConditionalPosterior {
 public:
  ConditionalPosterior(const SpMat& a, const SpMat& q_prior, const Mat& constraints, const Vec& y,
                       const Vec& noise_var, const std::vector<uint8_t>& masked)
      : c_(constraints) {
    const int n = static_cast<int>(q_prior.rows());
    const int m = static_cast<int>(a.rows());
    Vec w = Vec::Zero(m);
    for (int r = 0; r < m; ++r)
      if (masked.empty() || !masked[r]) w[r] = 1.0 / noise_var[r];
    SpMat q_post = q_prior + SpMat(a.transpose() * w.asDiagonal() * a);
    llt_.compute(q_post);
    if (llt_.info() != Eigen::Success)
      throw FactorizationError("conditional posterior precision is not positive definite");
    logdet_qpost_ = 2.0 * Mat(llt_.matrixL()).diagonal().array().log().sum();
    mean_unconstrained_ = llt_.solve(a.transpose() * (w.asDiagonal() * y));
    mean_ = mean_unconstrained_;
    if (c_.rows() > 0) {
      w_solve_ = Mat(n, c_.rows());
      for (int k = 0; k < c_.rows(); ++k) w_solve_.col(k) = llt_.solve(Vec(c_.row(k)));
      s_ = c_ * w_solve_;
      s_llt_.compute(s_);
      if (s_llt_.info() != Eigen::Success)
        throw FactorizationError("constraint Gram matrix is singular");
      logdet_s_ = 2.0 * Mat(s_llt_.matrixL()).diagonal().array().log().sum();
      mean_ -= w_solve_ * s_llt_.solve(c_ * mean_unconstrained_);
    }
  }

  const Vec& mean() const { return mean_; }
  double logdet_precision() const { return logdet_qpost_; }
  double logdet_constraint_gram() const { return logdet_s_; }
  int num_constraints() const { return static_cast<int>(c_.rows()); }
  int dim() const { return static_cast<int>(mean_.size()); }

  // constraint-corrected marginal standard deviations:
  // var_i = (Q^{-1})_ii - w_i' S^{-1} w_i with w_i the i-th row of W
  Vec marginal_sd() const {
    Vec var = takahashi_diag(llt_, dim());
    if (c_.rows() > 0) {
      Mat half = s_llt_.matrixL().solve(w_solve_.transpose());  // k x n
      for (int i = 0; i < var.size(); ++i) var[i] -= half.col(i).squaredNorm();
    }
    return var.cwiseMax(0.0).cwiseSqrt();
  }

  // One draw from the constrained posterior.
  Vec sample(CounterRng& rng) const {
    Vec eta(dim());
    for (int i = 0; i < eta.size(); ++i) eta[i] = rng.normal();
    // cov(P' L^{-T} eta) = Q^{-1}
    Vec x = llt_.permutationPinv() * Vec(llt_.matrixU().solve(eta));
    x += mean_unconstrained_;
    if (c_.rows() > 0) x -= w_solve_ * s_llt_.solve(c_ * x);
    return x;
  }

  Vec solve(const Vec& b) const { return llt_.solve(b); }

 private:
  Eigen::SimplicialLLT<SpMat> llt_;
  Mat c_;
  Mat w_solve_;  // Q^{-1} C'
  Mat s_;        // C Q^{-1} C'
  Eigen::LLT<Mat> s_llt_;
  Vec mean_unconstrained_;
  Vec mean_;
  double logdet_qpost_ = 0.0;
  double logdet_s_ = 0.0;
};

// log p(y | psi) for the Gaussian likelihood / Gaussian latent pair, exact,
// evaluated through the constrained prior and posterior at the posterior
// mean. All psi-independent constants are kept.
inline double log_evidence_gaussian(const SpMat& a, const SpMat& q_prior, const Mat& constraints,
                                    const Vec& y, const Vec& noise_var,
                                    const std::vector<uint8_t>& masked,
                                    const ConditionalPosterior& post) {
  Eigen::SimplicialLLT<SpMat> llt_prior(q_prior);
  if (llt_prior.info() != Eigen::Success)
    throw FactorizationError("prior precision is not positive definite");
  const double logdet_qp = 2.0 * Mat(llt_prior.matrixL()).diagonal().array().log().sum();

  double logdet_sp = 0.0;
  if (constraints.rows() > 0) {
    Mat wp(q_prior.rows(), constraints.rows());
    for (int k = 0; k < constraints.rows(); ++k)
      wp.col(k) = llt_prior.solve(Vec(constraints.row(k)));
    Mat sp = constraints * wp;
    Eigen::LLT<Mat> sp_llt(sp);
    if (sp_llt.info() != Eigen::Success)
      throw FactorizationError("prior constraint Gram matrix is singular");
    logdet_sp = 2.0 * Mat(sp_llt.matrixL()).diagonal().array().log().sum();
  }

  const Vec& mu = post.mean();
  double loglik = 0.0;
  const Vec fitted = a * mu;
  for (int r = 0; r < y.size(); ++r) {
    if (!masked.empty() && masked[r]) continue;
    const double d = y[r] - fitted[r];
    loglik += -0.5 * std::log(2.0 * M_PI * noise_var[r]) - 0.5 * d * d / noise_var[r];
  }
  const double quad_prior = mu.dot(q_prior * mu);
  return 0.5 * (logdet_qp + logdet_sp - post.logdet_precision() - post.logdet_constraint_gram()) -
         0.5 * quad_prior + loglik;
}

}  // namespace airfuse
