#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "airfuse/priors.hpp"
#include "airfuse/sparse_utils.hpp"

namespace airfuse {

// How an entry of the transformed hyperparameter vector psi maps to the
// natural-scale parameter it controls.
enum class HyperTransform {
  log_variance,  // psi = log sigma^2
  log_sd,        // psi = log sigma
  log_range,     // psi = log rho
  log_decay,     // psi = log phi (GPP exponential decay)
  identity       // lambda scalings, AR coefficients
};

struct HyperCfg {
  std::string name;
  HyperTransform transform = HyperTransform::log_variance;
  PriorSpec prior;
  double init = 0.0;  // initial psi value
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  // pc_matern_joint is a prior on the (sd, range) pair: set on the log_sd
  // entry with `partner` pointing at the log_range entry.
  int partner = -1;
  bool no_own_prior = false;  // covered by a partner's joint prior
};

using HyperLayout = std::vector<HyperCfg>;

inline int hyper_index(const HyperLayout& layout, const std::string& name) {
  for (int i = 0; i < static_cast<int>(layout.size()); ++i)
    if (layout[i].name == name) return i;
  return -1;
}

inline double natural_value(const HyperCfg& cfg, double psi) {
  switch (cfg.transform) {
    case HyperTransform::log_variance: return std::exp(psi);
    case HyperTransform::log_sd:
    case HyperTransform::log_range:
    case HyperTransform::log_decay: return std::exp(psi);
    case HyperTransform::identity: return psi;
  }
  return psi;
}

inline bool psi_in_domain(const HyperLayout& layout, const Vec& psi) {
  if (psi.size() != static_cast<Eigen::Index>(layout.size())) return false;
  for (int i = 0; i < psi.size(); ++i) {
    if (!std::isfinite(psi[i])) return false;
    if (psi[i] <= layout[i].lo || psi[i] >= layout[i].hi) return false;
  }
  return true;
}

// Log prior density of psi, including the change-of-variables terms for the
// transforms above.
inline double log_hyper_prior(const HyperLayout& layout, const Vec& psi) {
  double lp = 0.0;
  for (int i = 0; i < static_cast<int>(layout.size()); ++i) {
    const HyperCfg& cfg = layout[i];
    if (cfg.no_own_prior) continue;
    switch (cfg.prior.kind) {
      case PriorKind::pc_matern_joint: {
        if (cfg.partner < 0) throw std::logic_error("pc_matern_joint without partner entry");
        const double sigma = std::exp(psi[i]);
        const double rho = std::exp(psi[cfg.partner]);
        lp += pc_matern_joint_logdensity(cfg.prior, rho, sigma) + std::log(sigma) + std::log(rho);
        break;
      }
      case PriorKind::pc_sd: {
        // prior stated on sigma; psi is log sigma^2
        const double sigma = std::exp(0.5 * psi[i]);
        lp += prior_logdensity(cfg.prior, sigma) + std::log(0.5 * sigma);
        break;
      }
      case PriorKind::loggamma_precision:
        // density already on the log-precision scale; log prec = -psi
        lp += prior_logdensity(cfg.prior, -psi[i]);
        break;
      case PriorKind::normal:
      case PriorKind::normal_trunc:
        lp += prior_logdensity(cfg.prior, psi[i]);
        break;
      case PriorKind::fixed:
        break;
    }
    if (!std::isfinite(lp)) return -std::numeric_limits<double>::infinity();
  }
  return lp;
}

inline Vec initial_psi(const HyperLayout& layout) {
  Vec psi(static_cast<Eigen::Index>(layout.size()));
  for (int i = 0; i < psi.size(); ++i) psi[i] = layout[i].init;
  return psi;
}

}  // namespace airfuse
