#pragma once

#include <cmath>
#include <stdexcept>

namespace airfuse {

// Matern field parameters for the alpha = 2, d = 2 default (smoothness 1).
// rho is the empirical range: the distance at which correlation drops to
// about 0.13, rho = sqrt(8*smoothness)/kappa.
struct MaternParams {
  double sigma = 1.0;
  double rho = 1.0;
  double smoothness = 1.0;
  int dim = 2;

  double kappa() const { return std::sqrt(8.0 * smoothness) / rho; }
};

inline double matern_cov(double r, double sigma, double kappa, double smoothness = 1.0) {
  if (!(r >= 0.0)) throw std::invalid_argument("matern_cov: r must be >= 0");
  if (!(sigma > 0.0) || !(kappa > 0.0) || !(smoothness > 0.0))
    throw std::invalid_argument("matern_cov: parameters must be positive");
  if (r == 0.0) return sigma * sigma;
  const double kr = kappa * r;
  const double scale = sigma * sigma / (std::tgamma(smoothness) * std::pow(2.0, smoothness - 1.0));
  return scale * std::pow(kr, smoothness) * std::cyl_bessel_k(smoothness, kr);
}

// Inverts the marginal-variance and empirical-range formulas:
//   log kappa = 0.5*log(8*lambda) - log(rho)
//   log tau   = 0.5*log(Gamma(lambda)/(Gamma(alpha)*(4*pi)^(d/2)))
//               - log(sigma) - lambda*log(kappa),  alpha = lambda + d/2.
inline void params_from_range_sigma(double rho, double sigma, double smoothness, int dim,
                                    double& log_tau, double& log_kappa) {
  if (!(rho > 0.0) || !(sigma > 0.0))
    throw std::invalid_argument("params_from_range_sigma: rho and sigma must be positive");
  const double alpha = smoothness + 0.5 * dim;
  log_kappa = 0.5 * std::log(8.0 * smoothness) - std::log(rho);
  log_tau = 0.5 * std::log(std::tgamma(smoothness) /
                           (std::tgamma(alpha) * std::pow(4.0 * M_PI, 0.5 * dim))) -
            std::log(sigma) - smoothness * log_kappa;
}

inline void range_sigma_from_params(double log_tau, double log_kappa, double smoothness, int dim,
                                    double& rho, double& sigma) {
  const double alpha = smoothness + 0.5 * dim;
  rho = std::sqrt(8.0 * smoothness) * std::exp(-log_kappa);
  const double log_sigma = 0.5 * std::log(std::tgamma(smoothness) /
                                          (std::tgamma(alpha) * std::pow(4.0 * M_PI, 0.5 * dim))) -
                           log_tau - smoothness * log_kappa;
  sigma = std::exp(log_sigma);
}

}  // namespace airfuse
