#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "airfuse/assemble.hpp"
#include "airfuse/inference.hpp"
#include "airfuse/parallel.hpp"

namespace airfuse {

// Regular lattice of prediction cells at an intermediate resolution between
// the fine and coarse grids, plus the day indices and per-cell site type.
struct PredictionGrid {
  double x0 = 0.0, y0 = 0.0;
  double cell = 2.0;
  int nx = 0, ny = 0;
  std::vector<Point2D> cells;    // nx*ny, row-major from the lower-left
  std::vector<int> sitetype;     // per cell
  std::vector<int> days;         // 1-based day indices

  static PredictionGrid regular(double x0, double y0, double x1, double y1, double cell_km,
                                int default_sitetype = 0) {
    PredictionGrid g;
    g.x0 = x0;
    g.y0 = y0;
    g.cell = cell_km;
    g.nx = std::max(1, static_cast<int>(std::floor((x1 - x0) / cell_km)));
    g.ny = std::max(1, static_cast<int>(std::floor((y1 - y0) / cell_km)));
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        g.cells.push_back({x0 + (i + 0.5) * cell_km, y0 + (j + 0.5) * cell_km});
    g.sitetype.assign(g.cells.size(), default_sitetype);
    return g;
  }
};

struct GridPrediction {
  // indexed [day][cell]
  std::vector<Vec> mean, sd, q025, q975;
};

// Monte Carlo reconstruction of the monitor-block linear predictor on the
// grid: per posterior draw, sum the fixed effects, the projected spatial
// field scaled by its copy coefficient, the daily trend and the site-type
// trend, then summarize across draws. Per-draw pieces are kept in compact
// per-cell / per-day form so memory stays bounded.
inline GridPrediction predict_eta3(const FitResult& fit, const BlockDesign& design,
                                   const PredictionGrid& grid, int n_samples, std::uint64_t seed) {
  const auto& spec = design.spec();
  auto terms_it = spec.terms.find(SourceId::monitors);
  if (terms_it == spec.terms.end()) terms_it = spec.terms.begin();
  for (const auto& t : terms_it->second) {
    const LatentKind k = design.latent(t.latent).kind;
    if (k != LatentKind::matern_spde && k != LatentKind::rw1 && k != LatentKind::ar1 &&
        k != LatentKind::iid)
      throw std::invalid_argument("grid prediction supports spatial/temporal terms only");
  }
  for (const auto& f : spec.fixed_effects)
    if (f.kind == FixedKind::covariate || f.kind == FixedKind::covariate_x_sitetype)
      throw std::invalid_argument("grid prediction needs covariate-free models");

  ProjectorMatrix proj = projector(*design.mesh(), grid.cells);
  for (auto v : proj.valid)
    if (!v) throw std::invalid_argument("grid cell outside the mesh");

  const int n_cells = static_cast<int>(grid.cells.size());
  const int n_days = static_cast<int>(grid.days.size());
  const int t_max = design.n_days();

  // per-draw components
  Mat spatial(n_samples, n_cells);
  Mat temporal(n_samples, t_max + 1);
  std::vector<Mat> ar(n_samples);
  Mat base(n_samples, kNumSiteTypes);
  bool has_ar = false;

  auto draws = sample_posterior(fit, n_samples, seed);
  for (int s = 0; s < n_samples; ++s) {
    const Vec& theta = draws[s].theta;
    const Vec& psi = fit.points[draws[s].point].psi;
    double b[kNumSiteTypes] = {0, 0, 0};
    for (const auto& f : spec.fixed_effects) {
      const double v = theta[design.fixed_col(f.name)];
      const bool is_predictor_intercept =
          f.kind == FixedKind::intercept &&
          (f.block == SourceId::monitors || spec.terms.size() == 1);
      if (is_predictor_intercept)
        for (int k = 0; k < kNumSiteTypes; ++k) b[k] += v;
      if (f.kind == FixedKind::sitetype_indicator) b[f.sitetype] += v;
    }
    for (int k = 0; k < kNumSiteTypes; ++k) base(s, k) = b[k];
    spatial.row(s).setZero();
    temporal.row(s).setZero();
    for (const auto& t : terms_it->second) {
      const auto& e = design.latent(t.latent);
      const double lam = t.lambda.empty() ? 1.0 : spec.hyper_or_fixed(t.lambda, psi);
      if (e.kind == LatentKind::matern_spde) {
        spatial.row(s) += lam * (proj.weights * theta.segment(e.offset, e.size)).transpose();
      } else if (e.kind == LatentKind::rw1 || e.kind == LatentKind::iid) {
        for (int d = 0; d < e.rep_size; ++d) temporal(s, d + 1) += lam * theta[e.offset + d];
      } else if (e.kind == LatentKind::ar1) {
        has_ar = true;
        if (ar[s].size() == 0) ar[s] = Mat::Zero(kNumSiteTypes, e.rep_size);
        for (int rep = 0; rep < e.replicates; ++rep)
          for (int d = 0; d < e.rep_size; ++d)
            ar[s](rep % kNumSiteTypes, d) += lam * theta[e.offset + rep * e.rep_size + d];
      }
    }
  }

  GridPrediction out;
  out.mean.assign(n_days, Vec(n_cells));
  out.sd.assign(n_days, Vec(n_cells));
  out.q025.assign(n_days, Vec(n_cells));
  out.q975.assign(n_days, Vec(n_cells));
  parallel_for(n_days, [&](int di) {
    const int day = grid.days[di];
    std::vector<double> buf(n_samples);
    for (int c = 0; c < n_cells; ++c) {
      const int st = grid.sitetype[c];
      double m1 = 0.0, m2 = 0.0;
      for (int s = 0; s < n_samples; ++s) {
        double eta = base(s, st) + spatial(s, c);
        if (day <= t_max) eta += temporal(s, day);
        if (has_ar && ar[s].size() > 0 && day <= ar[s].cols()) eta += ar[s](st, day - 1);
        buf[s] = eta;
        m1 += eta;
        m2 += eta * eta;
      }
      m1 /= n_samples;
      out.mean[di][c] = m1;
      out.sd[di][c] =
          std::sqrt(std::max(0.0, (m2 - n_samples * m1 * m1) / std::max(1, n_samples - 1)));
      std::sort(buf.begin(), buf.end());
      auto quant = [&](double q) {
        const double pos = q * (static_cast<double>(buf.size()) - 1.0);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        return lo + 1 < buf.size() ? buf[lo] * (1.0 - frac) + buf[lo + 1] * frac : buf.back();
      };
      out.q025[di][c] = quant(0.025);
      out.q975[di][c] = quant(0.975);
    }
  });
  return out;
}

struct PredictionSite {
  std::string id;
  Point2D loc;
  int sitetype = 0;
  int day = 1;
  std::vector<double> covariates;
};

struct PredictiveSamples {
  std::vector<PredictionSite> sites;
  std::vector<std::vector<double>> draws;  // per site: n_eta * n_y values
};

// Two-stage predictive draws at validation sites: n_eta draws of the noise
// variance and the linear predictor from the joint posterior, then n_y
// Gaussian replicates around each, Q = n_eta * n_y per site.
inline PredictiveSamples predictive_samples(const FitResult& fit, const BlockDesign& design,
                                            const std::vector<PredictionSite>& sites,
                                            int n_eta = 50, int n_y = 100, std::uint64_t seed = 1,
                                            std::optional<double> noise_var_override = {}) {
  PredictiveSamples out;
  out.sites = sites;
  out.draws.assign(sites.size(), {});
  for (auto& v : out.draws) v.reserve(static_cast<std::size_t>(n_eta) * n_y);
  const std::string noise_name = design.spec().noise_hyper.count(SourceId::monitors)
                                     ? design.spec().noise_hyper.at(SourceId::monitors)
                                     : design.spec().noise_hyper.begin()->second;

  std::vector<int> pt_of_draw(n_eta);
  std::vector<Vec> theta_draws(n_eta);
  {
    auto draws = sample_posterior(fit, n_eta, splitmix64(seed ^ 0x11d));
    for (int e = 0; e < n_eta; ++e) {
      pt_of_draw[e] = draws[e].point;
      theta_draws[e] = std::move(draws[e].theta);
    }
  }
  std::vector<Mat> rows_by_point(fit.points.size());  // site x n_cols predictor rows

  for (int e = 0; e < n_eta; ++e) {
    const int k = pt_of_draw[e];
    const Vec& psi = fit.points[k].psi;
    if (rows_by_point[k].size() == 0) {
      Mat rows(sites.size(), design.n_cols());
      for (std::size_t s = 0; s < sites.size(); ++s)
        rows.row(static_cast<Eigen::Index>(s)) = design.predictor_row(
            sites[s].loc, sites[s].day, sites[s].sitetype, sites[s].covariates, psi);
      rows_by_point[k] = std::move(rows);
    }
    const Vec eta = rows_by_point[k] * theta_draws[e];
    const double noise_var = noise_var_override
                                 ? *noise_var_override
                                 : std::exp(design.spec().hyper_or_fixed(noise_name, psi));
    const double noise_sd = std::sqrt(std::max(0.0, noise_var));
    for (std::size_t s = 0; s < sites.size(); ++s) {
      CounterRng rng = CounterRng(seed, 0x9e55).fork(s, static_cast<std::uint64_t>(e) + 1);
      for (int r = 0; r < n_y; ++r)
        out.draws[s].push_back(eta[static_cast<Eigen::Index>(s)] + noise_sd * rng.normal());
    }
  }
  return out;
}

enum class OutputScale { log_scale, concentration };

// Concentration scale applies exp draw-wise; summaries are then computed on
// the transformed draws rather than by lognormal formulas.
inline void backtransform(PredictiveSamples& samples, OutputScale scale) {
  if (scale == OutputScale::log_scale) return;
  for (auto& v : samples.draws)
    for (auto& x : v) x = std::exp(x);
}

// ---- gridded output ------------------------------------------------------

inline void write_esri_ascii(const std::string& path, const PredictionGrid& grid,
                             const Vec& values) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  char buf[64];
  f << "ncols " << grid.nx << "\nnrows " << grid.ny << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", grid.x0);
  f << "xllcorner " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", grid.y0);
  f << "yllcorner " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", grid.cell);
  f << "cellsize " << buf << "\nNODATA_value -9999\n";
  for (int j = grid.ny - 1; j >= 0; --j) {
    for (int i = 0; i < grid.nx; ++i) {
      std::snprintf(buf, sizeof(buf), "%.10g", values[j * grid.nx + i]);
      f << buf << (i + 1 < grid.nx ? " " : "");
    }
    f << "\n";
  }
}

inline void write_grid_csv(const std::string& path, const PredictionGrid& grid,
                           const GridPrediction& pred) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "x,y,day,mean,sd,q025,q975\n";
  char buf[256];
  for (std::size_t di = 0; di < grid.days.size(); ++di)
    for (std::size_t c = 0; c < grid.cells.size(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d,%.10g,%.10g,%.10g,%.10g\n", grid.cells[c].x,
                    grid.cells[c].y, grid.days[di], pred.mean[di][c], pred.sd[di][c],
                    pred.q025[di][c], pred.q975[di][c]);
      f << buf;
    }
}

}  // namespace airfuse
