#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "airfuse/assemble.hpp"
#include "airfuse/gmrf.hpp"
#include "airfuse/parallel.hpp"

namespace airfuse {

inline double log_evidence(const BlockDesign& design, const Vec& psi) {
  SpMat a = design.design(psi);
  SpMat qp = design.prior_precision(psi);
  Vec v = design.noise_variances(psi);
  ConditionalPosterior post(a, qp, design.constraints(), design.y(), v, design.masked());
  return log_evidence_gaussian(a, qp, design.constraints(), design.y(), v, design.masked(), post);
}

// log p(psi | y) up to the shared normalizing constant; -inf outside the
// domain or on factorization failure (the point is simply rejected).
inline double log_hyper_posterior(const BlockDesign& design, const Vec& psi) {
  if (!psi_in_domain(design.hypers(), psi)) return -std::numeric_limits<double>::infinity();
  const double lp = design.log_hyper_prior(psi);
  if (!std::isfinite(lp)) return -std::numeric_limits<double>::infinity();
  try {
    return log_evidence(design, psi) + lp;
  } catch (const FactorizationError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

struct OptimizerOptions {
  int max_iterations = 200;
  double fd_step = 1e-4;
  double grad_tol = 1e-3;
  double step_tol = 1e-5;
  double hess_step = 2e-2;
};

struct OptimizeResult {
  Vec psi_mode;
  Mat neg_hessian;
  double log_post = 0.0;
  bool converged = false;
  int iterations = 0;
};

namespace inferdetail {

inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  parallel_for(static_cast<int>(x.size()), [&](int i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  });
  return g;
}

inline Mat fd_neg_hessian(const std::function<double(const Vec&)>& lp, const Vec& x, double h) {
  const int k = static_cast<int>(x.size());
  Mat hess(k, k);
  const double f0 = lp(x);
  std::vector<std::pair<int, int>> jobs;
  for (int i = 0; i < k; ++i)
    for (int j = i; j < k; ++j) jobs.push_back({i, j});
  std::vector<double> vals(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), [&](int idx) {
    const auto [i, j] = jobs[idx];
    // shrink the step when a probe leaves the support
    for (double step = h;; step *= 0.25) {
      double v;
      if (i == j) {
        Vec xp = x, xm = x;
        xp[i] += step;
        xm[i] -= step;
        v = (lp(xp) - 2.0 * f0 + lp(xm)) / (step * step);
      } else {
        Vec xpp = x, xpm = x, xmp = x, xmm = x;
        xpp[i] += step;
        xpp[j] += step;
        xpm[i] += step;
        xpm[j] -= step;
        xmp[i] -= step;
        xmp[j] += step;
        xmm[i] -= step;
        xmm[j] -= step;
        v = (lp(xpp) - lp(xpm) - lp(xmp) + lp(xmm)) / (4.0 * step * step);
      }
      if (std::isfinite(v)) {
        vals[idx] = v;
        break;
      }
      if (step < h / 300.0) {
        vals[idx] = i == j ? -1.0 / (h * h) : 0.0;  // boundary: strong curvature
        break;
      }
    }
  });
  for (std::size_t idx = 0; idx < jobs.size(); ++idx) {
    hess(jobs[idx].first, jobs[idx].second) = -vals[idx];
    hess(jobs[idx].second, jobs[idx].first) = -vals[idx];
  }
  // symmetric PD projection with eigenvalue flooring
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (hess + hess.transpose()));
  Vec ev = es.eigenvalues().cwiseMax(1e-8);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace inferdetail

// Quasi-Newton (BFGS) maximization of the hyperparameter log posterior with
// central finite-difference gradients. Converged when the gradient inf-norm
// drops below grad_tol or a line-search step falls below step_tol.
inline OptimizeResult optimize_hyperposterior(const std::function<double(const Vec&)>& lp,
                                              const Vec& psi_init,
                                              const OptimizerOptions& opts = {}) {
  OptimizeResult out;
  const int k = static_cast<int>(psi_init.size());
  Vec x = psi_init;
  double fx = lp(x);
  if (!std::isfinite(fx))
    throw std::invalid_argument("optimize_hyperposterior: initial point has zero posterior");
  Vec g = -inferdetail::fd_gradient(lp, x, opts.fd_step);  // gradient of -lp
  const auto scaled_identity = [&]() {
    return Mat::Identity(k, k) * (1.0 / std::max(1.0, g.cwiseAbs().maxCoeff()));
  };
  Mat h_inv = scaled_identity();
  bool just_reset = true;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    if (g.cwiseAbs().maxCoeff() < opts.grad_tol) {
      out.converged = true;
      break;
    }
    Vec dir = -(h_inv * g);
    if (dir.dot(g) > 0.0) dir = -g / std::max(1.0, g.cwiseAbs().maxCoeff());
    // cap the proposal so one iteration cannot jump across basins
    const double dmax = dir.cwiseAbs().maxCoeff();
    if (dmax > 2.0) dir *= 2.0 / dmax;

    double t = 1.0;
    double fnew = -std::numeric_limits<double>::infinity();
    Vec xnew;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      xnew = x + t * dir;
      fnew = lp(xnew);
      if (std::isfinite(fnew) && fnew >= fx + 1e-4 * t * (-g).dot(dir) - 1e-12) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (just_reset) break;  // steepest ascent failed too: out.converged stays false
      h_inv = scaled_identity();
      just_reset = true;
      continue;
    }
    just_reset = false;
    Vec gnew = -inferdetail::fd_gradient(lp, xnew, opts.fd_step);
    Vec s = xnew - x;
    Vec yv = gnew - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12) {
      Mat eye = Mat::Identity(k, k);
      h_inv = (eye - s * yv.transpose() / sy) * h_inv * (eye - yv * s.transpose() / sy) +
              s * s.transpose() / sy;
    }
    x = xnew;
    fx = fnew;
    g = gnew;
    out.iterations = iter + 1;
    if (s.cwiseAbs().maxCoeff() < opts.step_tol) {
      out.converged = true;
      break;
    }
  }
  out.psi_mode = x;
  out.log_post = fx;
  out.neg_hessian = inferdetail::fd_neg_hessian(lp, x, opts.hess_step);
  return out;
}

enum class ExploreStrategy { ccd, grid, empirical_bayes };

struct DesignPoint {
  Vec psi;
  double log_post = 0.0;
  double weight = 0.0;
};

namespace inferdetail {

// Hadamard matrices for the fractional factorial shell: Sylvester doubling
// for powers of two, Paley construction for 12, 20, 24.
inline Mat hadamard(int n) {
  if (n == 1) return Mat::Ones(1, 1);
  if (n % 2 == 0 && (n & (n - 1)) == 0) {
    Mat h = hadamard(n / 2);
    Mat out(n, n);
    out << h, h, h, -h;
    return out;
  }
  const int q = n - 1;  // prime, q % 4 == 3
  auto is_qr = [&](int a) {
    for (int x = 1; x < q; ++x)
      if ((x * x) % q == a) return true;
    return false;
  };
  Mat out(n, n);
  out.row(0).setOnes();
  out.col(0).setOnes();
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) {
      int d = (i - j) % q;
      if (d < 0) d += q;
      out(i + 1, j + 1) = (i == j) ? -1.0 : (is_qr(d) ? 1.0 : -1.0);
    }
  return out;
}

inline Mat factorial_shell(int k) {
  if (k <= 5) {
    const int n = 1 << k;
    Mat out(n, k);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < k; ++c) out(r, c) = (r >> c) & 1 ? 1.0 : -1.0;
    return out;
  }
  int n = 0;
  for (int cand : {8, 12, 16, 20, 24, 32, 64, 128}) {
    if (cand >= k + 1) {
      n = cand;
      break;
    }
  }
  if (n == 0) throw std::invalid_argument("ccd: dimension too large");
  Mat h = hadamard(n);
  return h.rightCols(h.cols() - 1).leftCols(k);  // drop the all-ones column
}

}  // namespace inferdetail

// Places integration points around the mode. ccd: a factorial shell plus
// axial points at standardized per-dimension distance f0 (Euclidean radius
// f0*sqrt(k)) in the metric of the negative Hessian. Weights combine the
// evaluated log-posterior differences with fixed design volumes chosen so
// that an exactly Gaussian posterior integrates its mean and covariance
// exactly; they are invariant to constant shifts of the log posterior.
inline std::vector<DesignPoint> explore_hyperposterior(
    const std::function<double(const Vec&)>& lp, const Vec& psi_mode, const Mat& neg_hessian,
    ExploreStrategy strategy, double f0 = 1.1) {
  const int k = static_cast<int>(psi_mode.size());
  std::vector<DesignPoint> points;

  if (strategy == ExploreStrategy::empirical_bayes) {
    points.push_back({psi_mode, lp(psi_mode), 1.0});
    return points;
  }

  Eigen::SelfAdjointEigenSolver<Mat> es(neg_hessian);
  if (es.info() != Eigen::Success) throw std::runtime_error("explore: eigendecomposition failed");
  Vec scale = es.eigenvalues().cwiseMax(1e-8).cwiseInverse().cwiseSqrt();
  Mat basis = es.eigenvectors() * scale.asDiagonal();  // z -> psi offsets

  std::vector<Vec> zs;
  std::vector<double> volume;
  zs.push_back(Vec::Zero(k));
  volume.push_back(1.0);
  if (strategy == ExploreStrategy::ccd) {
    Mat shell = inferdetail::factorial_shell(k);
    for (int r = 0; r < shell.rows(); ++r) zs.push_back(f0 * Vec(shell.row(r)));
    const double axial = f0 * std::sqrt(static_cast<double>(k));
    for (int i = 0; i < k; ++i) {
      Vec z = Vec::Zero(k);
      z[i] = axial;
      zs.push_back(z);
      z[i] = -axial;
      zs.push_back(z);
    }
    // Gaussian-exact volumes: with n_s shell points at radius f0*sqrt(k),
    // target masses are w0 = 1 - 1/f0^2 and ws = 1/(n_s f0^2); divide the
    // shell mass by the Gaussian density ratio so that an exactly quadratic
    // log posterior reproduces those masses.
    const double n_shell = static_cast<double>(zs.size() - 1);
    const double w0 = 1.0 - 1.0 / (f0 * f0);
    const double ws = 1.0 / (n_shell * f0 * f0);
    const double ratio = std::exp(-0.5 * k * f0 * f0);
    volume[0] = w0;
    volume.resize(zs.size(), ws / ratio);
  } else {  // grid: coarse tensor grid, feasible for small k only
    if (k > 6) throw std::invalid_argument("grid exploration limited to 6 hyperparameters");
    std::vector<double> levels = {-1.5, 0.0, 1.5};
    std::function<void(int, Vec)> rec = [&](int d, Vec z) {
      if (d == k) {
        if (z.cwiseAbs().maxCoeff() > 0.0) {
          zs.push_back(z);
          volume.push_back(1.0);
        }
        return;
      }
      for (double l : levels) {
        Vec z2 = z;
        z2[d] = l;
        rec(d + 1, z2);
      }
    };
    rec(0, Vec::Zero(k));
  }

  points.resize(zs.size());
  parallel_for(static_cast<int>(zs.size()), [&](int i) {
    Vec psi = psi_mode + basis * zs[i];
    points[i] = {psi, lp(psi), volume[i]};
  });
  // drop rejected points, weight by exp(log-posterior difference) * volume
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& p : points) best = std::max(best, p.log_post);
  std::vector<DesignPoint> kept;
  for (const auto& p : points)
    if (std::isfinite(p.log_post)) kept.push_back(p);
  double total = 0.0;
  for (auto& p : kept) {
    p.weight = std::exp(p.log_post - best) * p.weight;
    total += p.weight;
  }
  for (auto& p : kept) p.weight /= total;
  return kept;
}

struct ExplorationPoint {
  Vec psi;
  double log_post = 0.0;
  double weight = 0.0;
  Vec latent_mean;
  Vec latent_sd;
  std::shared_ptr<ConditionalPosterior> posterior;  // factor cache, not persisted
};

struct FitResult {
  std::string model_name;
  std::uint64_t spec_hash = 0;
  HyperLayout hypers;
  Vec psi_mode;
  Mat neg_hessian;
  double mode_log_post = 0.0;
  bool converged = false;
  int iterations = 0;
  double fit_seconds = 0.0;
  std::vector<ExplorationPoint> points;

  int best_point() const {
    int b = 0;
    for (std::size_t i = 1; i < points.size(); ++i)
      if (points[i].weight > points[b].weight) b = static_cast<int>(i);
    return b;
  }
};

struct FitOptions {
  ExploreStrategy strategy = ExploreStrategy::ccd;
  double f0 = 1.1;
  OptimizerOptions optimizer;
  bool compute_marginal_sd = true;
};

inline std::shared_ptr<ConditionalPosterior> make_posterior(const BlockDesign& design,
                                                            const Vec& psi) {
  SpMat a = design.design(psi);
  SpMat qp = design.prior_precision(psi);
  Vec v = design.noise_variances(psi);
  return std::make_shared<ConditionalPosterior>(a, qp, design.constraints(), design.y(), v,
                                                design.masked());
}

inline FitResult fit_model(const BlockDesign& design, const FitOptions& opts = {},
                           const Vec* psi_init = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  auto lp = [&](const Vec& psi) { return log_hyper_posterior(design, psi); };
  Vec init = psi_init ? *psi_init : initial_psi(design.hypers());
  OptimizeResult mode = optimize_hyperposterior(lp, init, opts.optimizer);

  FitResult fit;
  fit.model_name = design.spec().model_name;
  fit.spec_hash = design.spec_hash();
  fit.hypers = design.hypers();
  fit.psi_mode = mode.psi_mode;
  fit.neg_hessian = mode.neg_hessian;
  fit.mode_log_post = mode.log_post;
  fit.converged = mode.converged;
  fit.iterations = mode.iterations;

  auto points = explore_hyperposterior(lp, mode.psi_mode, mode.neg_hessian, opts.strategy, opts.f0);
  fit.points.resize(points.size());
  parallel_for(static_cast<int>(points.size()), [&](int i) {
    ExplorationPoint ep;
    ep.psi = points[i].psi;
    ep.log_post = points[i].log_post;
    ep.weight = points[i].weight;
    ep.posterior = make_posterior(design, ep.psi);
    ep.latent_mean = ep.posterior->mean();
    if (opts.compute_marginal_sd) ep.latent_sd = ep.posterior->marginal_sd();
    fit.points[i] = std::move(ep);
  });
  fit.fit_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return fit;
}

// Recompute the per-point factor caches after loading a persisted fit.
inline void ensure_posteriors(FitResult& fit, const BlockDesign& design) {
  if (fit.spec_hash != design.spec_hash())
    throw std::invalid_argument("fit artifact does not match the assembled model (spec hash)");
  parallel_for(static_cast<int>(fit.points.size()), [&](int i) {
    auto& ep = fit.points[i];
    if (!ep.posterior) {
      ep.posterior = make_posterior(design, ep.psi);
      if (ep.latent_mean.size() == 0) ep.latent_mean = ep.posterior->mean();
      if (ep.latent_sd.size() == 0) ep.latent_sd = ep.posterior->marginal_sd();
    }
  });
}

struct MarginalSummary {
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double median = 0.0;
  double q975 = 0.0;
};

namespace inferdetail {
inline double mixture_cdf(const FitResult& fit, int index, double x) {
  double c = 0.0;
  for (const auto& p : fit.points) {
    const double mu = p.latent_mean[index];
    const double sd = std::max(1e-300, p.latent_sd[index]);
    c += p.weight * 0.5 * std::erfc(-(x - mu) / (sd * std::sqrt(2.0)));
  }
  return c;
}

inline double mixture_quantile(const FitResult& fit, int index, double q) {
  double lo = 1e300, hi = -1e300, sdmax = 0.0;
  for (const auto& p : fit.points) {
    lo = std::min(lo, p.latent_mean[index]);
    hi = std::max(hi, p.latent_mean[index]);
    sdmax = std::max(sdmax, p.latent_sd[index]);
  }
  lo -= 10.0 * sdmax + 1e-12;
  hi += 10.0 * sdmax + 1e-12;
  const double tol = std::max(1e-14, 1e-8 * (sdmax > 0 ? sdmax : 1.0));
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (mixture_cdf(fit, index, mid) < q)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}
}  // namespace inferdetail

// Gaussian-mixture marginal of one latent component over the exploration
// points.
inline MarginalSummary marginal_latent(const FitResult& fit, int index) {
  if (fit.points.empty() || index < 0 || index >= fit.points[0].latent_mean.size())
    throw std::out_of_range("marginal_latent: index out of range");
  MarginalSummary s;
  double m1 = 0.0, m2 = 0.0;
  for (const auto& p : fit.points) {
    const double mu = p.latent_mean[index];
    const double sd = p.latent_sd[index];
    m1 += p.weight * mu;
    m2 += p.weight * (sd * sd + mu * mu);
  }
  s.mean = m1;
  s.sd = std::sqrt(std::max(0.0, m2 - m1 * m1));
  s.q025 = inferdetail::mixture_quantile(fit, index, 0.025);
  s.median = inferdetail::mixture_quantile(fit, index, 0.5);
  s.q975 = inferdetail::mixture_quantile(fit, index, 0.975);
  return s;
}

// Gaussian approximation at the mode for a hyperparameter (transformed
// scale); the covariance is the inverse negative Hessian.
inline MarginalSummary hyper_marginal(const FitResult& fit, int index) {
  if (index < 0 || index >= fit.psi_mode.size())
    throw std::out_of_range("hyper_marginal: index out of range");
  Mat cov = fit.neg_hessian.inverse();
  MarginalSummary s;
  s.mean = fit.psi_mode[index];
  s.sd = std::sqrt(std::max(0.0, cov(index, index)));
  s.q025 = s.mean - 1.959963984540054 * s.sd;
  s.median = s.mean;
  s.q975 = s.mean + 1.959963984540054 * s.sd;
  return s;
}

struct PosteriorDraw {
  int point = 0;  // exploration point index
  Vec theta;
};

// Joint draws: pick an exploration point by weight, then a Gaussian draw of
// the latent field from that point's conditional posterior. Deterministic
// per (seed, draw index) regardless of threading.
inline std::vector<PosteriorDraw> sample_posterior(const FitResult& fit, int n,
                                                   std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_posterior: n must be >= 1");
  std::vector<double> w;
  for (const auto& p : fit.points) {
    if (!p.posterior)
      throw std::logic_error("sample_posterior: posterior factors missing; call ensure_posteriors");
    w.push_back(p.weight);
  }
  std::vector<PosteriorDraw> draws(n);
  parallel_for(n, [&](int i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i));
    const int k = rng.pick_weighted(w);
    draws[i].point = k;
    draws[i].theta = fit.points[k].posterior->sample(rng);
  });
  return draws;
}

// Deviance information criterion with the plug-in deviance at the posterior
// means and the expected deviance estimated from posterior samples.
inline double dic(const FitResult& fit, const BlockDesign& design, int n_samples = 200,
                  std::uint64_t seed = 12345) {
  Vec psi_bar = Vec::Zero(fit.psi_mode.size());
  Vec theta_bar = Vec::Zero(fit.points[0].latent_mean.size());
  for (const auto& p : fit.points) {
    psi_bar += p.weight * p.psi;
    theta_bar += p.weight * p.latent_mean;
  }
  auto deviance = [&](const Vec& psi, const Vec& theta) {
    const SpMat a = design.design(psi);
    const Vec v = design.noise_variances(psi);
    const Vec fitted = a * theta;
    double d = 0.0;
    for (int r = 0; r < design.n_rows(); ++r) {
      if (design.masked()[r]) continue;
      const double res = design.y()[r] - fitted[r];
      d += std::log(2.0 * M_PI * v[r]) + res * res / v[r];
    }
    return d;
  };
  const double d_hat = deviance(psi_bar, theta_bar);
  auto draws = sample_posterior(fit, n_samples, seed);
  double d_bar = 0.0;
  for (const auto& dr : draws) d_bar += deviance(fit.points[dr.point].psi, dr.theta);
  d_bar /= n_samples;
  return d_hat + 2.0 * (d_bar - d_hat);
}

}  // namespace airfuse
