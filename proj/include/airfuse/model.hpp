#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "airfuse/hyper.hpp"
#include "airfuse/observations.hpp"
#include "airfuse/priors.hpp"

namespace airfuse {

enum class LatentKind {
  matern_spde,     // spatial field on mesh nodes
  rw1,             // temporal random walk over days, sum-to-zero
  ar1,             // stationary AR(1) over days, optionally replicated
  iid,             // exchangeable effects over days
  kron_rw1_spde,   // separable space-time interaction (RW1 (x) SPDE)
  gpp_knots,       // low-rank predictive-process field on knot locations
  gp_sites         // full exponential-correlation field on listed sites
};

struct LatentBlockCfg {
  std::string name;
  LatentKind kind = LatentKind::iid;
  int replicates = 1;           // ar1: one replicate per site type
  bool replicate_by_sitetype = false;
  // hyper bindings (names into the hyper layout / fixed table)
  std::string hyper_var;        // log variance (rw1/ar1/iid/kron/gpp)
  std::string hyper_sd;         // matern marginal sd
  std::string hyper_range;      // matern range
  std::string hyper_ar;         // AR coefficient (ar1 / gpp temporal link)
  std::string hyper_decay;      // exponential decay phi (gpp / gp_sites)
  bool temporal_ar = false;     // gpp / gp_sites: AR-linked days instead of iid
};

enum class FixedKind { intercept, sitetype_indicator, covariate, covariate_x_sitetype };

struct FixedEffectCfg {
  std::string name;
  FixedKind kind = FixedKind::intercept;
  SourceId block = SourceId::monitors;  // intercepts attach to one block
  int sitetype = -1;                    // for indicator kinds
  int covariate_index = -1;             // index into ObservationRow::covariates
  double prior_variance = 1000.0;
};

// One linear-predictor term: a latent block entering a likelihood block,
// optionally rescaled by a copy coefficient lambda.
struct TermCfg {
  std::string latent;
  std::string lambda;  // hyper or fixed-hyper name; empty = weight 1
};

struct JointModelSpec {
  std::string model_name = "joint";
  std::vector<ObservationBlock> blocks;
  std::vector<LatentBlockCfg> latents;
  std::map<SourceId, std::vector<TermCfg>> terms;
  std::vector<FixedEffectCfg> fixed_effects;
  HyperLayout hypers;                          // free entries of psi, in order
  std::map<std::string, double> fixed_hypers;  // e.g. lambda pinned at 1
  std::map<SourceId, std::string> noise_hyper; // per-block log noise variance
  int n_days = 0;
  std::vector<Point2D> gpp_knots;

  double hyper_or_fixed(const std::string& name, const Vec& psi) const {
    const int idx = hyper_index(hypers, name);
    if (idx >= 0) return psi[idx];
    auto it = fixed_hypers.find(name);
    if (it == fixed_hypers.end()) throw std::logic_error("unknown hyperparameter " + name);
    return it->second;
  }
};

struct JointPriorConfig {
  double pc_range_frac = 0.2;   // range prior scale as a fraction of the domain extent
  double pc_range_prob = 0.95;  // P(range < r0)
  double pc_sigma0 = 100.0;
  double pc_sigma_prob = 0.5;   // P(sd > sigma0)
  double rw1_sd_tail_prob = 0.01;
  double loggamma_shape = 1.0;
  double loggamma_rate = 5e-5;
  double lambda12_mean = 1.1, lambda13_mean = 1.3, lambda23_mean = 0.9;
  double lambda_var = 100.0;
  double ar_mean = 0.3, ar_var = 0.5;
  double fixed_effect_var = 1000.0;
};

namespace modeldetail {

inline double empirical_sd(const std::vector<ObservationRow>& rows) {
  double s = 0.0, s2 = 0.0;
  long n = 0;
  for (const auto& r : rows) {
    if (r.missing) continue;
    s += r.value;
    s2 += r.value * r.value;
    ++n;
  }
  if (n < 2) return 1.0;
  const double m = s / n;
  return std::sqrt(std::max(1e-12, (s2 - n * m * m) / (n - 1)));
}

inline int max_day(const std::vector<ObservationBlock>& blocks) {
  int t = 0;
  for (const auto& b : blocks)
    if (b.resolution == TemporalResolution::daily)
      for (const auto& r : b.rows) t = std::max(t, r.day);
  return t;
}

inline HyperCfg noise_cfg(const std::string& name, const JointPriorConfig& pc) {
  HyperCfg h;
  h.name = name;
  h.transform = HyperTransform::log_variance;
  h.prior = PriorSpec::LogGammaPrecision(pc.loggamma_shape, pc.loggamma_rate);
  h.init = std::log(0.05);
  return h;
}

inline void add_matern_hypers(JointModelSpec& spec, const std::string& sd_name,
                              const std::string& range_name, double r0, double sigma0,
                              const JointPriorConfig& pc, double init_sigma, double init_range) {
  HyperCfg hs;
  hs.name = sd_name;
  hs.transform = HyperTransform::log_sd;
  hs.prior = PriorSpec::PcMaternJoint(r0, pc.pc_range_prob, sigma0, pc.pc_sigma_prob);
  hs.init = std::log(init_sigma);
  HyperCfg hr;
  hr.name = range_name;
  hr.transform = HyperTransform::log_range;
  hr.prior = PriorSpec::Fixed(0.0);
  hr.no_own_prior = true;
  hr.init = std::log(init_range);
  hs.partner = static_cast<int>(spec.hypers.size()) + 1;
  spec.hypers.push_back(hs);
  spec.hypers.push_back(hr);
}

inline double domain_extent(const std::vector<ObservationBlock>& blocks) {
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const auto& b : blocks)
    for (const auto& r : b.rows) {
      x0 = std::min(x0, r.loc.x);
      x1 = std::max(x1, r.loc.x);
      y0 = std::min(y0, r.loc.y);
      y1 = std::max(y1, r.loc.y);
    }
  return std::max(x1 - x0, y1 - y0);
}

}  // namespace modeldetail

struct JointModelOptions {
  bool use_pcm = true;
  bool use_aqum = true;
  bool lambdas_free = true;
  JointPriorConfig priors;
};

// The full fusion model: gridded sources and monitors share a spatial field
// and (with the daily source present) a daily trend, each copied with a
// scaling coefficient; monitors add site-type effects and a per-site-type
// AR(1) residual trend.
inline JointModelSpec build_joint_spec(const std::vector<ObservationBlock>& blocks,
                                       const JointModelOptions& opt = {}) {
  JointModelSpec spec;
  const auto& pc = opt.priors;
  const ObservationBlock* pcm = nullptr;
  const ObservationBlock* aqum = nullptr;
  const ObservationBlock* mon = nullptr;
  for (const auto& b : blocks) {
    if (b.id == SourceId::pcm) pcm = &b;
    if (b.id == SourceId::aqum) aqum = &b;
    if (b.id == SourceId::monitors) mon = &b;
  }
  if (!mon) throw std::invalid_argument("build_joint_spec: monitor block is required");
  const bool with_pcm = opt.use_pcm && pcm;
  const bool with_aqum = opt.use_aqum && aqum;
  if (!with_pcm && !with_aqum)
    throw std::invalid_argument("build_joint_spec: need at least one gridded source");

  spec.model_name = with_pcm && with_aqum ? "joint" : (with_pcm ? "joint-pcm-only" : "joint-aqum-only");
  if (with_pcm) spec.blocks.push_back(*pcm);
  if (with_aqum) spec.blocks.push_back(*aqum);
  spec.blocks.push_back(*mon);
  spec.n_days = modeldetail::max_day(spec.blocks);

  // noise variances
  for (const auto& b : spec.blocks) {
    const std::string nm = "noise_" + source_name(b.id);
    spec.noise_hyper[b.id] = nm;
    spec.hypers.push_back(modeldetail::noise_cfg(nm, pc));
  }

  // shared spatial field
  {
    LatentBlockCfg z;
    z.name = "spatial_field";
    z.kind = LatentKind::matern_spde;
    z.hyper_sd = "spatial_sd";
    z.hyper_range = "spatial_range";
    spec.latents.push_back(z);
    const double extent = modeldetail::domain_extent(spec.blocks);
    modeldetail::add_matern_hypers(spec, "spatial_sd", "spatial_range",
                                   pc.pc_range_frac * extent, pc.pc_sigma0, pc, 0.5,
                                   0.3 * extent);
  }

  // daily trend shared between the daily gridded source and the monitors
  if (with_aqum) {
    LatentBlockCfg z;
    z.name = "daily_trend";
    z.kind = LatentKind::rw1;
    z.hyper_var = "trend_var";
    spec.latents.push_back(z);
    HyperCfg h;
    h.name = "trend_var";
    h.transform = HyperTransform::log_variance;
    h.prior = PriorSpec::PcSd(modeldetail::empirical_sd(aqum->rows), pc.rw1_sd_tail_prob);
    h.init = std::log(0.01);
    spec.hypers.push_back(h);
  }

  // per-site-type residual trend at the monitors
  {
    LatentBlockCfg z;
    z.name = "sitetype_trend";
    z.kind = LatentKind::ar1;
    z.replicates = kNumSiteTypes;
    z.replicate_by_sitetype = true;
    z.hyper_var = "sitetype_var";
    z.hyper_ar = "sitetype_ar";
    spec.latents.push_back(z);
    HyperCfg hv;
    hv.name = "sitetype_var";
    hv.transform = HyperTransform::log_variance;
    hv.prior = PriorSpec::LogGammaPrecision(pc.loggamma_shape, pc.loggamma_rate);
    hv.init = std::log(0.01);
    spec.hypers.push_back(hv);
    HyperCfg ha;
    ha.name = "sitetype_ar";
    ha.transform = HyperTransform::identity;
    ha.prior = PriorSpec::NormalTrunc(pc.ar_mean, pc.ar_var, -1.0, 1.0);
    ha.init = 0.3;
    ha.lo = -0.999;
    ha.hi = 0.999;
    spec.hypers.push_back(ha);
  }

  // copy coefficients
  auto add_lambda = [&](const std::string& name, double prior_mean) {
    if (opt.lambdas_free) {
      HyperCfg h;
      h.name = name;
      h.transform = HyperTransform::identity;
      h.prior = PriorSpec::Normal(prior_mean, pc.lambda_var);
      h.init = 1.0;
      spec.hypers.push_back(h);
    } else {
      spec.fixed_hypers[name] = 1.0;
    }
  };

  // linear predictors
  if (with_pcm) {
    spec.terms[SourceId::pcm] = {{"spatial_field", ""}};
    spec.fixed_effects.push_back(
        {"alpha_pcm", FixedKind::intercept, SourceId::pcm, -1, -1, pc.fixed_effect_var});
  }
  if (with_aqum) {
    std::vector<TermCfg> t;
    if (with_pcm) {
      t.push_back({"spatial_field", "scale_spatial_aqum"});
      add_lambda("scale_spatial_aqum", pc.lambda12_mean);
    } else {
      t.push_back({"spatial_field", ""});  // the daily source owns the field
    }
    t.push_back({"daily_trend", ""});
    spec.terms[SourceId::aqum] = t;
    spec.fixed_effects.push_back(
        {"alpha_aqum", FixedKind::intercept, SourceId::aqum, -1, -1, pc.fixed_effect_var});
  }
  {
    std::vector<TermCfg> t;
    t.push_back({"spatial_field", "scale_spatial_monitors"});
    add_lambda("scale_spatial_monitors", with_pcm ? pc.lambda13_mean : pc.lambda12_mean);
    if (with_aqum) {
      t.push_back({"daily_trend", "scale_trend_monitors"});
      add_lambda("scale_trend_monitors", pc.lambda23_mean);
    }
    t.push_back({"sitetype_trend", ""});
    spec.terms[SourceId::monitors] = t;
    spec.fixed_effects.push_back(
        {"alpha_monitors", FixedKind::intercept, SourceId::monitors, -1, -1, pc.fixed_effect_var});
    spec.fixed_effects.push_back({"beta_URB", FixedKind::sitetype_indicator, SourceId::monitors, 1,
                                  -1, pc.fixed_effect_var});
    spec.fixed_effects.push_back({"beta_RKS", FixedKind::sitetype_indicator, SourceId::monitors, 2,
                                  -1, pc.fixed_effect_var});
  }
  return spec;
}

enum class SeparateVariant { spatial_or_temporal, additive, interaction };

// Single-source models: (spatial or temporal) / additive / interaction.
// The gridded daily source takes the temporal effect in the first variant,
// the annual source the spatial one.
inline JointModelSpec build_separate_model(const ObservationBlock& block, SeparateVariant variant,
                                           const JointPriorConfig& pc = {}) {
  JointModelSpec spec;
  spec.blocks = {block};
  // annual sources use their year index as the time axis when the variant
  // carries temporal structure
  const bool needs_time =
      variant != SeparateVariant::spatial_or_temporal ||
      block.resolution == TemporalResolution::daily;
  if (needs_time && spec.blocks[0].resolution == TemporalResolution::annual)
    spec.blocks[0].resolution = TemporalResolution::daily;
  spec.n_days = modeldetail::max_day(spec.blocks);
  const std::string nm = "noise_" + source_name(block.id);
  spec.noise_hyper[block.id] = nm;
  spec.hypers.push_back(modeldetail::noise_cfg(nm, pc));
  spec.fixed_effects.push_back(
      {"alpha", FixedKind::intercept, block.id, -1, -1, pc.fixed_effect_var});
  const double extent = std::max(1.0, modeldetail::domain_extent(spec.blocks));

  const bool spatial_first = block.resolution == TemporalResolution::annual;
  std::vector<TermCfg> t;
  const bool want_spatial =
      variant == SeparateVariant::additive || (variant == SeparateVariant::spatial_or_temporal && spatial_first);
  const bool want_temporal =
      variant == SeparateVariant::additive || (variant == SeparateVariant::spatial_or_temporal && !spatial_first);

  if (variant == SeparateVariant::interaction) {
    spec.model_name = "separate-iii-" + source_name(block.id);
    LatentBlockCfg z;
    z.name = "spacetime";
    z.kind = LatentKind::kron_rw1_spde;
    z.hyper_var = "spacetime_var";
    z.hyper_range = "spacetime_range";
    spec.latents.push_back(z);
    HyperCfg hv;
    hv.name = "spacetime_var";
    hv.transform = HyperTransform::log_variance;
    hv.prior = PriorSpec::LogGammaPrecision(pc.loggamma_shape, pc.loggamma_rate);
    hv.init = std::log(0.1);
    spec.hypers.push_back(hv);
    HyperCfg hr;
    hr.name = "spacetime_range";
    hr.transform = HyperTransform::log_range;
    hr.prior = PriorSpec::Normal(std::log(0.3 * extent), 4.0);  // vague on log range
    hr.init = std::log(0.3 * extent);
    spec.hypers.push_back(hr);
    t.push_back({"spacetime", ""});
  } else {
    spec.model_name = std::string(variant == SeparateVariant::additive ? "separate-ii-" : "separate-i-") +
                      source_name(block.id);
    if (want_spatial) {
      LatentBlockCfg z;
      z.name = "spatial_field";
      z.kind = LatentKind::matern_spde;
      z.hyper_sd = "spatial_sd";
      z.hyper_range = "spatial_range";
      spec.latents.push_back(z);
      modeldetail::add_matern_hypers(spec, "spatial_sd", "spatial_range", pc.pc_range_frac * extent,
                                     pc.pc_sigma0, pc, 0.5, 0.3 * extent);
      t.push_back({"spatial_field", ""});
    }
    if (want_temporal) {
      LatentBlockCfg z;
      z.name = "daily_trend";
      z.kind = LatentKind::rw1;
      z.hyper_var = "trend_var";
      spec.latents.push_back(z);
      HyperCfg h;
      h.name = "trend_var";
      h.transform = HyperTransform::log_variance;
      h.prior = PriorSpec::PcSd(modeldetail::empirical_sd(block.rows), pc.rw1_sd_tail_prob);
      h.init = std::log(0.01);
      spec.hypers.push_back(h);
      t.push_back({"daily_trend", ""});
    }
  }
  spec.terms[block.id] = t;
  return spec;
}

// Single-likelihood model on monitors with aligned covariates entering as
// fixed-effect columns plus the usual structured residuals.
inline JointModelSpec build_fusion_spec(const ObservationBlock& monitors_with_covariates,
                                        int n_covariates, const JointPriorConfig& pc = {}) {
  if (monitors_with_covariates.id != SourceId::monitors)
    throw std::invalid_argument("build_fusion_spec: expects the monitor block");
  JointModelSpec spec;
  spec.model_name = "linear-fusion";
  spec.blocks = {monitors_with_covariates};
  spec.n_days = modeldetail::max_day(spec.blocks);
  spec.noise_hyper[SourceId::monitors] = "noise_monitors";
  spec.hypers.push_back(modeldetail::noise_cfg("noise_monitors", pc));
  const double extent = std::max(1.0, modeldetail::domain_extent(spec.blocks));

  LatentBlockCfg z1;
  z1.name = "spatial_field";
  z1.kind = LatentKind::matern_spde;
  z1.hyper_sd = "spatial_sd";
  z1.hyper_range = "spatial_range";
  spec.latents.push_back(z1);
  modeldetail::add_matern_hypers(spec, "spatial_sd", "spatial_range", pc.pc_range_frac * extent,
                                 pc.pc_sigma0, pc, 0.5, 0.3 * extent);

  LatentBlockCfg z2;
  z2.name = "daily_trend";
  z2.kind = LatentKind::rw1;
  z2.hyper_var = "trend_var";
  spec.latents.push_back(z2);
  HyperCfg ht;
  ht.name = "trend_var";
  ht.transform = HyperTransform::log_variance;
  ht.prior = PriorSpec::PcSd(modeldetail::empirical_sd(monitors_with_covariates.rows),
                             pc.rw1_sd_tail_prob);
  ht.init = std::log(0.01);
  spec.hypers.push_back(ht);

  LatentBlockCfg z3;
  z3.name = "sitetype_trend";
  z3.kind = LatentKind::ar1;
  z3.replicates = kNumSiteTypes;
  z3.replicate_by_sitetype = true;
  z3.hyper_var = "sitetype_var";
  z3.hyper_ar = "sitetype_ar";
  spec.latents.push_back(z3);
  HyperCfg hv;
  hv.name = "sitetype_var";
  hv.transform = HyperTransform::log_variance;
  hv.prior = PriorSpec::LogGammaPrecision(pc.loggamma_shape, pc.loggamma_rate);
  hv.init = std::log(0.01);
  spec.hypers.push_back(hv);
  HyperCfg ha;
  ha.name = "sitetype_ar";
  ha.transform = HyperTransform::identity;
  ha.prior = PriorSpec::NormalTrunc(pc.ar_mean, pc.ar_var, -1.0, 1.0);
  ha.init = 0.3;
  ha.lo = -0.999;
  ha.hi = 0.999;
  spec.hypers.push_back(ha);

  spec.terms[SourceId::monitors] = {{"spatial_field", ""}, {"daily_trend", ""},
                                    {"sitetype_trend", ""}};
  spec.fixed_effects.push_back(
      {"beta0", FixedKind::intercept, SourceId::monitors, -1, -1, pc.fixed_effect_var});
  for (int c = 0; c < n_covariates; ++c)
    spec.fixed_effects.push_back({"beta_x" + std::to_string(c + 1), FixedKind::covariate,
                                  SourceId::monitors, -1, c, pc.fixed_effect_var});
  spec.fixed_effects.push_back(
      {"beta_URB", FixedKind::sitetype_indicator, SourceId::monitors, 1, -1, pc.fixed_effect_var});
  spec.fixed_effects.push_back(
      {"beta_RKS", FixedKind::sitetype_indicator, SourceId::monitors, 2, -1, pc.fixed_effect_var});
  return spec;
}

// Masks the monitor observations of one cross-validation fold. Masked rows
// stay in the design (their fitted values are the predictions) but contribute
// no likelihood terms.
inline JointModelSpec mask_validation(const JointModelSpec& spec,
                                      const std::map<std::string, int>& fold_assignment,
                                      int fold) {
  if (fold < 1) throw std::invalid_argument("mask_validation: unknown fold id");
  JointModelSpec out = spec;
  for (auto& b : out.blocks) {
    if (b.id != SourceId::monitors) continue;
    for (auto& r : b.rows) {
      auto it = fold_assignment.find(r.monitor_id);
      if (it == fold_assignment.end())
        throw std::invalid_argument("mask_validation: monitor " + r.monitor_id +
                                    " has no fold assignment");
      if (it->second == fold) r.missing = true;
    }
  }
  return out;
}

}  // namespace airfuse
