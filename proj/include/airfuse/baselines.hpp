#pragma once

#include <algorithm>
#include <iostream>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "airfuse/gpp.hpp"
#include "airfuse/inference.hpp"
#include "airfuse/model.hpp"
#include "airfuse/prediction.hpp"

namespace airfuse {

// Node-registered regular lattice: value (j*nx + i) sits at
// (x0 + i*dx, y0 + j*dy).
struct GridField {
  double x0 = 0.0, y0 = 0.0, dx = 1.0, dy = 1.0;
  int nx = 0, ny = 0;
  std::vector<double> values;

  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * nx + i]; }
};

// Standard 4-point bilinear blend. Points within half a cell outside the
// lattice are clamped to the border row/column; beyond that is an error.
inline double bilinear_interpolate(const GridField& f, const Point2D& p) {
  if (f.nx < 2 || f.ny < 2) throw std::invalid_argument("bilinear: lattice needs >= 2x2 nodes");
  const double xmax = f.x0 + (f.nx - 1) * f.dx;
  const double ymax = f.y0 + (f.ny - 1) * f.dy;
  double x = p.x, y = p.y;
  if (x < f.x0 - 0.5 * f.dx || x > xmax + 0.5 * f.dx || y < f.y0 - 0.5 * f.dy ||
      y > ymax + 0.5 * f.dy)
    throw std::invalid_argument("bilinear: point outside the lattice");
  x = std::clamp(x, f.x0, xmax);
  y = std::clamp(y, f.y0, ymax);
  int i0 = std::min(static_cast<int>((x - f.x0) / f.dx), f.nx - 2);
  int j0 = std::min(static_cast<int>((y - f.y0) / f.dy), f.ny - 2);
  const double fx = (x - (f.x0 + i0 * f.dx)) / f.dx;
  const double fy = (y - (f.y0 + j0 * f.dy)) / f.dy;
  return (1 - fx) * (1 - fy) * f.at(i0, j0) + fx * (1 - fy) * f.at(i0 + 1, j0) +
         (1 - fx) * fy * f.at(i0, j0 + 1) + fx * fy * f.at(i0 + 1, j0 + 1);
}

// Rebuilds the regular lattice behind a gridded observation block, one field
// per day (daily blocks) or averaged over the year replicates (annual).
inline std::map<int, GridField> grid_fields_from_block(const ObservationBlock& block) {
  std::set<double> xs, ys;
  for (const auto& r : block.rows) {
    xs.insert(r.loc.x);
    ys.insert(r.loc.y);
  }
  GridField proto;
  proto.nx = static_cast<int>(xs.size());
  proto.ny = static_cast<int>(ys.size());
  if (proto.nx < 2 || proto.ny < 2)
    throw std::invalid_argument("grid_fields_from_block: not a regular lattice");
  proto.x0 = *xs.begin();
  proto.y0 = *ys.begin();
  proto.dx = (*xs.rbegin() - *xs.begin()) / (proto.nx - 1);
  proto.dy = (*ys.rbegin() - *ys.begin()) / (proto.ny - 1);
  std::map<double, int> xi, yi;
  int k = 0;
  for (double x : xs) xi[x] = k++;
  k = 0;
  for (double y : ys) yi[y] = k++;

  std::map<int, GridField> fields;
  std::map<int, std::vector<int>> counts;
  const bool annual = block.resolution == TemporalResolution::annual;
  for (const auto& r : block.rows) {
    const int key = annual ? 0 : r.day;
    auto& f = fields[key];
    if (f.values.empty()) {
      f = proto;
      f.values.assign(static_cast<std::size_t>(proto.nx) * proto.ny, 0.0);
      counts[key].assign(f.values.size(), 0);
    }
    const std::size_t idx = static_cast<std::size_t>(yi[r.loc.y]) * proto.nx + xi[r.loc.x];
    f.values[idx] += r.value;
    counts[key][idx] += 1;
  }
  for (auto& [key, f] : fields) {
    for (std::size_t i = 0; i < f.values.size(); ++i) {
      if (counts[key][i] == 0)
        throw std::invalid_argument("grid_fields_from_block: lattice has holes");
      f.values[i] /= counts[key][i];
    }
  }
  return fields;
}

// Posterior-mean linear predictor of a fitted (separate) model at targets:
// the model-based alternative to bilinear interpolation.
inline std::vector<double> kriging_align(const FitResult& fit, const BlockDesign& design,
                                         const std::vector<PredictionSite>& targets) {
  std::vector<double> out(targets.size(), 0.0);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (const auto& p : fit.points) {
      const Vec row = design.predictor_row(targets[i].loc, targets[i].day, targets[i].sitetype,
                                           targets[i].covariates, p.psi);
      out[i] += p.weight * row.dot(p.latent_mean);
    }
  }
  return out;
}

// Attaches aligned covariate columns [X1 = daily grid, X2 = annual grid] to
// the monitor rows via bilinear interpolation. The annual source enters as
// its across-year mean field: its latent structure is purely spatial.
inline ObservationBlock align_bilinear(const ObservationBlock& monitors,
                                       const ObservationBlock* aqum,
                                       const ObservationBlock* pcm) {
  ObservationBlock out = monitors;
  std::map<int, GridField> aqum_fields, pcm_fields;
  if (aqum) aqum_fields = grid_fields_from_block(*aqum);
  if (pcm) pcm_fields = grid_fields_from_block(*pcm);
  for (auto& r : out.rows) {
    r.covariates.clear();
    if (aqum) {
      auto it = aqum_fields.find(r.day);
      if (it == aqum_fields.end())
        throw std::invalid_argument("align_bilinear: day missing from the daily grid");
      r.covariates.push_back(bilinear_interpolate(it->second, r.loc));
    }
    if (pcm) r.covariates.push_back(bilinear_interpolate(pcm_fields.at(0), r.loc));
  }
  return out;
}

// Same covariate columns, aligned by kriging from fitted separate models.
inline ObservationBlock align_kriging(const ObservationBlock& monitors, const FitResult* aqum_fit,
                                      const BlockDesign* aqum_design, const FitResult* pcm_fit,
                                      const BlockDesign* pcm_design) {
  ObservationBlock out = monitors;
  std::vector<PredictionSite> sites(out.rows.size());
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    sites[i].loc = out.rows[i].loc;
    sites[i].day = out.rows[i].day;
    sites[i].sitetype = -1;
  }
  std::vector<double> x1, x2;
  if (aqum_fit) x1 = kriging_align(*aqum_fit, *aqum_design, sites);
  if (pcm_fit) {
    auto annual_sites = sites;
    for (auto& s : annual_sites) s.day = 1;  // purely spatial predictor
    x2 = kriging_align(*pcm_fit, *pcm_design, annual_sites);
  }
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    out.rows[i].covariates.clear();
    if (aqum_fit) out.rows[i].covariates.push_back(x1[i]);
    if (pcm_fit) out.rows[i].covariates.push_back(x2[i]);
  }
  return out;
}

struct BaselineFit {
  JointModelSpec spec;
  std::shared_ptr<BlockDesign> design;
  FitResult fit;
};

// Single-likelihood hierarchical model with linear effects on the aligned
// covariates and the usual structured residuals.
inline BaselineFit fit_linear_fusion(const ObservationBlock& monitors_with_covariates,
                                     std::shared_ptr<const TriangleMesh> mesh,
                                     const FitOptions& opts = {}, const JointPriorConfig& pc = {}) {
  int n_cov = monitors_with_covariates.rows.empty()
                  ? 0
                  : static_cast<int>(monitors_with_covariates.rows[0].covariates.size());
  BaselineFit out;
  out.spec = build_fusion_spec(monitors_with_covariates, n_cov, pc);
  out.design = std::make_shared<BlockDesign>(out.spec, std::move(mesh));

  // reject rank-deficient fixed-effect designs (e.g. identical covariates)
  const Vec psi0 = initial_psi(out.design->hypers());
  Mat a = Mat(out.design->design(psi0));
  const int p = static_cast<int>(out.design->fixed_names().size());
  Mat fixed_cols = a.rightCols(p);
  Eigen::FullPivLU<Mat> lu(fixed_cols.transpose() * fixed_cols);
  lu.setThreshold(1e-8);
  if (lu.rank() < p)
    throw std::invalid_argument("fit_linear_fusion: rank-deficient fixed-effect design");

  out.fit = fit_model(*out.design, opts);
  return out;
}

struct GppOptions {
  std::vector<Point2D> knots;   // defaults to a 5x5 grid over the sites
  bool stationary = false;      // full-rank field on the observation sites
  bool temporal_ar = true;      // AR(1)-linked days (iid days otherwise)
  JointPriorConfig priors;
  double decay_init = 0.05;     // 1/km
};

// Site-type-specific regression on the aligned covariates with a low-rank
// predictive-process residual field (or its full-rank stationary variant).
inline JointModelSpec build_gpp_spec(const ObservationBlock& monitors_with_covariates,
                                     const GppOptions& opt) {
  if (monitors_with_covariates.id != SourceId::monitors)
    throw std::invalid_argument("build_gpp_spec: expects the monitor block");
  const int n_cov = monitors_with_covariates.rows.empty()
                        ? 0
                        : static_cast<int>(monitors_with_covariates.rows[0].covariates.size());
  JointModelSpec spec;
  spec.model_name = opt.stationary ? "gpp-stationary" : "gpp";
  spec.blocks = {monitors_with_covariates};
  spec.n_days = modeldetail::max_day(spec.blocks);
  spec.noise_hyper[SourceId::monitors] = "noise_monitors";
  spec.hypers.push_back(modeldetail::noise_cfg("noise_monitors", opt.priors));
  spec.gpp_knots = opt.knots;

  LatentBlockCfg nu;
  nu.name = "residual_field";
  nu.kind = opt.stationary ? LatentKind::gp_sites : LatentKind::gpp_knots;
  nu.hyper_var = "field_var";
  nu.hyper_decay = "field_decay";
  nu.temporal_ar = opt.temporal_ar;
  if (opt.temporal_ar) nu.hyper_ar = "field_ar";
  spec.latents.push_back(nu);
  spec.terms[SourceId::monitors] = {{"residual_field", ""}};

  HyperCfg hv;
  hv.name = "field_var";
  hv.transform = HyperTransform::log_variance;
  hv.prior = PriorSpec::LogGammaPrecision(opt.priors.loggamma_shape, opt.priors.loggamma_rate);
  hv.init = std::log(0.1);
  spec.hypers.push_back(hv);
  HyperCfg hd;
  hd.name = "field_decay";
  hd.transform = HyperTransform::log_decay;
  hd.prior = PriorSpec::Normal(std::log(opt.decay_init), 4.0);
  hd.init = std::log(opt.decay_init);
  spec.hypers.push_back(hd);
  if (opt.temporal_ar) {
    HyperCfg ha;
    ha.name = "field_ar";
    ha.transform = HyperTransform::identity;
    ha.prior = PriorSpec::NormalTrunc(opt.priors.ar_mean, opt.priors.ar_var, -1.0, 1.0);
    ha.init = 0.3;
    ha.lo = -0.999;
    ha.hi = 0.999;
    spec.hypers.push_back(ha);
  }

  spec.fixed_effects.push_back(
      {"gamma0", FixedKind::intercept, SourceId::monitors, -1, -1, opt.priors.fixed_effect_var});
  for (int c = 0; c < n_cov; ++c)
    spec.fixed_effects.push_back({"gamma_x" + std::to_string(c + 1), FixedKind::covariate,
                                  SourceId::monitors, -1, c, opt.priors.fixed_effect_var});
  for (int st : {1, 2}) {
    const std::string suffix = sitetype_name(st);
    spec.fixed_effects.push_back({"gamma0_" + suffix, FixedKind::sitetype_indicator,
                                  SourceId::monitors, st, -1, opt.priors.fixed_effect_var});
    for (int c = 0; c < n_cov; ++c)
      spec.fixed_effects.push_back({"gamma_x" + std::to_string(c + 1) + "_" + suffix,
                                    FixedKind::covariate_x_sitetype, SourceId::monitors, st, c,
                                    opt.priors.fixed_effect_var});
  }
  return spec;
}

inline BaselineFit fit_gpp_model(const ObservationBlock& monitors_with_covariates, GppOptions opt,
                                 const FitOptions& fit_opts = {}) {
  if (opt.knots.empty()) {
    std::vector<Point2D> locs;
    for (const auto& r : monitors_with_covariates.rows) locs.push_back(r.loc);
    opt.knots = regular_knots(locs, 5, 5);
  }
  // m greater than the per-day observation count leaves the knots undersampled
  std::map<int, int> per_day;
  for (const auto& r : monitors_with_covariates.rows) per_day[r.day]++;
  int min_per_day = 1 << 30;
  for (const auto& [d, c] : per_day) min_per_day = std::min(min_per_day, c);
  if (!opt.stationary && static_cast<int>(opt.knots.size()) > min_per_day)
    std::cerr << "warning: more knots (" << opt.knots.size() << ") than observations per day ("
              << min_per_day << ")\n";

  BaselineFit out;
  out.spec = build_gpp_spec(monitors_with_covariates, opt);
  out.design = std::make_shared<BlockDesign>(out.spec, nullptr);
  out.fit = fit_model(*out.design, fit_opts);
  return out;
}

}  // namespace airfuse
