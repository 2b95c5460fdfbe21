#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace airfuse {

enum class PriorKind {
  pc_matern_joint,     // joint prior on (range rho, sd sigma) from tail probabilities
  pc_sd,               // exponential on a standard deviation, rate from P(sigma > u) = alpha
  loggamma_precision,  // Gamma(shape, rate) on a precision, density on the log-precision scale
  normal,              // mean / variance
  normal_trunc,        // normal restricted to (lo, hi), renormalized
  fixed                // not a random quantity
};

struct PriorSpec {
  PriorKind kind = PriorKind::fixed;
  // pc_matern_joint: rho0, prob_rho_below, sigma0, prob_sigma_above
  double rho0 = 1.0, prob_rho_below = 0.95, sigma0 = 1.0, prob_sigma_above = 0.5;
  int dim = 2;
  // pc_sd: P(sigma > u) = alpha
  double u = 1.0, alpha = 0.01;
  // loggamma_precision
  double shape = 1.0, rate = 5e-5;
  // normal / normal_trunc
  double mean = 0.0, variance = 1.0, lo = -1.0, hi = 1.0;
  double fixed_value = 0.0;

  static PriorSpec Normal(double mean, double variance) {
    PriorSpec p;
    p.kind = PriorKind::normal;
    p.mean = mean;
    p.variance = variance;
    return p;
  }
  static PriorSpec NormalTrunc(double mean, double variance, double lo, double hi) {
    PriorSpec p;
    p.kind = PriorKind::normal_trunc;
    p.mean = mean;
    p.variance = variance;
    p.lo = lo;
    p.hi = hi;
    return p;
  }
  static PriorSpec LogGammaPrecision(double shape, double rate) {
    PriorSpec p;
    p.kind = PriorKind::loggamma_precision;
    p.shape = shape;
    p.rate = rate;
    return p;
  }
  static PriorSpec PcSd(double u, double alpha) {
    PriorSpec p;
    p.kind = PriorKind::pc_sd;
    p.u = u;
    p.alpha = alpha;
    return p;
  }
  static PriorSpec PcMaternJoint(double rho0, double prob_rho_below, double sigma0,
                                 double prob_sigma_above, int dim = 2) {
    PriorSpec p;
    p.kind = PriorKind::pc_matern_joint;
    p.rho0 = rho0;
    p.prob_rho_below = prob_rho_below;
    p.sigma0 = sigma0;
    p.prob_sigma_above = prob_sigma_above;
    p.dim = dim;
    return p;
  }
  static PriorSpec Fixed(double v) {
    PriorSpec p;
    p.kind = PriorKind::fixed;
    p.fixed_value = v;
    return p;
  }
};

namespace detail {
constexpr double neg_inf = -std::numeric_limits<double>::infinity();
inline double normal_logpdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * std::log(2.0 * M_PI * variance) - 0.5 * d * d / variance;
}
inline double normal_cdf(double x, double mean, double sd) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}
}  // namespace detail

// Rate of the exponential PC prior on a standard deviation: P(sigma > u) = alpha.
inline double pc_sd_rate(double u, double alpha) {
  if (!(u > 0.0) || !(alpha > 0.0) || !(alpha < 1.0))
    throw std::invalid_argument("pc_sd_rate: need u > 0 and alpha in (0,1)");
  return -std::log(alpha) / u;
}

// Joint PC prior on (range, sd):
//   pi(rho, sigma) = (d/2) lam1 rho^{-d/2-1} exp(-lam1 rho^{-d/2}) * lam2 exp(-lam2 sigma)
// with lam1, lam2 calibrated so P(rho < rho0) = q_rho and P(sigma > sigma0) = q_sigma.
inline void pc_matern_rates(const PriorSpec& spec, double& lam1, double& lam2) {
  if (!(spec.rho0 > 0.0) || !(spec.sigma0 > 0.0))
    throw std::invalid_argument("pc_matern_rates: scales must be positive");
  if (!(spec.prob_rho_below > 0.0 && spec.prob_rho_below < 1.0) ||
      !(spec.prob_sigma_above > 0.0 && spec.prob_sigma_above < 1.0))
    throw std::invalid_argument("pc_matern_rates: tail probabilities must be in (0,1)");
  lam1 = -std::log(spec.prob_rho_below) * std::pow(spec.rho0, 0.5 * spec.dim);
  lam2 = -std::log(spec.prob_sigma_above) / spec.sigma0;
}

inline double pc_matern_joint_logdensity(const PriorSpec& spec, double rho, double sigma) {
  if (!(rho > 0.0) || !(sigma > 0.0)) return detail::neg_inf;
  double lam1, lam2;
  pc_matern_rates(spec, lam1, lam2);
  const double hd = 0.5 * spec.dim;
  return std::log(hd) + std::log(lam1) - (hd + 1.0) * std::log(rho) -
         lam1 * std::pow(rho, -hd) + std::log(lam2) - lam2 * sigma;
}

// Log prior density of a univariate hyperparameter. The value passed is the
// quantity named by the kind: the sd for pc_sd, the log-precision for
// loggamma_precision, the parameter itself for normal kinds.
inline double prior_logdensity(const PriorSpec& spec, double value) {
  switch (spec.kind) {
    case PriorKind::pc_sd: {
      if (!(value > 0.0)) return detail::neg_inf;
      const double rate = pc_sd_rate(spec.u, spec.alpha);
      return std::log(rate) - rate * value;
    }
    case PriorKind::loggamma_precision: {
      // precision = exp(value) ~ Gamma(shape, rate); includes the Jacobian of
      // the log transform so the density is over value in R.
      const double prec = std::exp(value);
      return spec.shape * std::log(spec.rate) - std::lgamma(spec.shape) + spec.shape * value -
             spec.rate * prec;
    }
    case PriorKind::normal:
      return detail::normal_logpdf(value, spec.mean, spec.variance);
    case PriorKind::normal_trunc: {
      if (value <= spec.lo || value >= spec.hi) return detail::neg_inf;
      const double sd = std::sqrt(spec.variance);
      const double z = detail::normal_cdf(spec.hi, spec.mean, sd) -
                       detail::normal_cdf(spec.lo, spec.mean, sd);
      return detail::normal_logpdf(value, spec.mean, spec.variance) - std::log(z);
    }
    case PriorKind::fixed:
      return value == spec.fixed_value ? 0.0 : detail::neg_inf;
    case PriorKind::pc_matern_joint:
      throw std::invalid_argument("prior_logdensity: pc_matern_joint is bivariate");
  }
  return detail::neg_inf;
}

}  // namespace airfuse
