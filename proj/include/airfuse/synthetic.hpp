#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "airfuse/assemble.hpp"
#include "airfuse/fem.hpp"
#include "airfuse/gmrf.hpp"
#include "airfuse/latent.hpp"
#include "airfuse/matern.hpp"
#include "airfuse/mesh.hpp"
#include "airfuse/model.hpp"
#include "airfuse/rng.hpp"

namespace airfuse {

// Geometry and generating parameters of the synthetic misaligned dataset:
// a fine annual grid, a coarse daily grid and clustered monitors, sized so
// a full joint fit runs in minutes.
struct SyntheticConfig {
  double domain = 100.0;  // square side, km
  int pcm_nx = 20, pcm_ny = 20, pcm_years = 2;
  int aqum_nx = 5, aqum_ny = 5;
  int n_monitors = 40;  // ~1/4 rural, the rest urban/kerbside clustered
  int n_days = 60;

  double alpha_pcm = 2.07, alpha_aqum = 2.58, alpha_monitors = 2.47;
  double beta_urb = -0.17, beta_rks = 0.38;
  double noise_pcm = 0.0003, noise_aqum = 0.0303, noise_monitors = 0.0213;
  double spatial_sigma = 0.7, spatial_range = 30.0;
  double trend_var = 0.004;     // random-walk increment variance
  double sitetype_var = 0.01;   // AR(1) innovation variance
  double sitetype_ar = 0.57;
  double lambda_12 = 1.1, lambda_13 = 1.3, lambda_23 = 0.9;

  double mesh_edge_inner = 8.0, mesh_edge_outer = 16.0, mesh_cutoff = 0.1;
};

struct SyntheticTruth {
  std::map<std::string, double> hyper;  // natural-scale generating values
  std::map<std::string, double> fixed;
  Vec spatial_field;   // at mesh nodes
  Vec daily_trend;
  Mat sitetype_trend;  // replicates x days
  // noiseless monitor-block linear predictor per (monitor index, day-1)
  Mat eta_monitors;
  std::vector<std::string> monitor_ids;
  std::vector<int> monitor_sitetype;
  std::vector<Point2D> monitor_locs;
};

struct SyntheticDataset {
  std::vector<ObservationBlock> blocks;
  std::shared_ptr<TriangleMesh> mesh;
  SyntheticTruth truth;
};

namespace synthdetail {

inline Vec sample_gmrf(const SpMat& q, const Mat& constraints, CounterRng& rng) {
  const int n = static_cast<int>(q.rows());
  ConditionalPosterior prior(SpMat(0, n), q, constraints, Vec(0), Vec(0), {});
  return prior.sample(rng);
}

inline std::vector<Point2D> grid_centers(double domain, int nx, int ny) {
  std::vector<Point2D> out;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      out.push_back({domain * (i + 0.5) / nx, domain * (j + 0.5) / ny});
  return out;
}

}  // namespace synthdetail

// Draws the latent fields from their priors at the generating parameters and
// emits the three misaligned observation blocks plus the hidden truth record.
inline SyntheticDataset simulate_joint(const SyntheticConfig& cfg, std::uint64_t seed) {
  SyntheticDataset out;
  CounterRng site_rng(seed, 1);

  // monitor layout: rural spread out, urban/kerbside clustered around centres
  const int n_rur = cfg.n_monitors / 4;
  std::vector<Point2D> locs;
  std::vector<int> types;
  for (int i = 0; i < n_rur; ++i) {
    locs.push_back({cfg.domain * (0.05 + 0.9 * site_rng.uniform()),
                    cfg.domain * (0.05 + 0.9 * site_rng.uniform())});
    types.push_back(0);
  }
  const Point2D centre{0.55 * cfg.domain, 0.45 * cfg.domain};
  for (int i = n_rur; i < cfg.n_monitors; ++i) {
    double x, y;
    do {
      x = centre.x + 0.12 * cfg.domain * site_rng.normal();
      y = centre.y + 0.12 * cfg.domain * site_rng.normal();
    } while (x < 0.02 * cfg.domain || x > 0.98 * cfg.domain || y < 0.02 * cfg.domain ||
             y > 0.98 * cfg.domain);
    locs.push_back({x, y});
    types.push_back(i % 2 == 0 ? 1 : 2);
  }

  const Polygon boundary = Polygon::rectangle(0, 0, cfg.domain, cfg.domain);
  out.mesh = std::make_shared<TriangleMesh>(
      build_mesh(locs, boundary, cfg.mesh_edge_inner, cfg.mesh_edge_outer, cfg.mesh_cutoff));

  // latent draws
  SpMat c, g;
  fem_matrices(*out.mesh, c, g);
  double lt, lk;
  params_from_range_sigma(cfg.spatial_range, cfg.spatial_sigma, 1.0, 2, lt, lk);
  CounterRng z1_rng(seed, 2);
  Vec z1 = synthdetail::sample_gmrf(spde_precision(c, g, lt, lk), Mat(0, out.mesh->num_nodes()),
                                    z1_rng);

  SpMat q2 = rw1_precision(cfg.n_days, cfg.trend_var);
  q2 += sparse_identity(cfg.n_days, 1e-6 / cfg.trend_var);
  Mat c2 = Mat::Ones(1, cfg.n_days);
  CounterRng z2_rng(seed, 3);
  Vec z2 = synthdetail::sample_gmrf(q2, c2, z2_rng);

  const double ar_marg = cfg.sitetype_var / (1.0 - cfg.sitetype_ar * cfg.sitetype_ar);
  Mat z3(kNumSiteTypes, cfg.n_days);
  for (int r = 0; r < kNumSiteTypes; ++r) {
    CounterRng z3_rng(seed, 4 + static_cast<std::uint64_t>(r));
    z3.row(r) = synthdetail::sample_gmrf(ar1_precision(cfg.n_days, cfg.sitetype_ar, ar_marg),
                                         Mat(0, cfg.n_days), z3_rng)
                    .transpose();
  }

  // projections
  auto pcm_cells = synthdetail::grid_centers(cfg.domain, cfg.pcm_nx, cfg.pcm_ny);
  auto aqum_cells = synthdetail::grid_centers(cfg.domain, cfg.aqum_nx, cfg.aqum_ny);
  auto p_pcm = projector(*out.mesh, pcm_cells);
  auto p_aqum = projector(*out.mesh, aqum_cells);
  auto p_mon = projector(*out.mesh, locs);
  if (!p_pcm.all_valid() || !p_aqum.all_valid() || !p_mon.all_valid())
    throw std::runtime_error("simulate_joint: geometry outside the mesh");
  Vec z1_pcm = p_pcm.weights * z1;
  Vec z1_aqum = p_aqum.weights * z1;
  Vec z1_mon = p_mon.weights * z1;

  // observation blocks
  CounterRng eps_rng(seed, 7);
  ObservationBlock pcm{SourceId::pcm, TemporalResolution::annual, {}};
  for (int year = 1; year <= cfg.pcm_years; ++year)
    for (std::size_t i = 0; i < pcm_cells.size(); ++i) {
      ObservationRow r;
      r.loc = pcm_cells[i];
      r.day = year;
      r.value = cfg.alpha_pcm + z1_pcm[static_cast<Eigen::Index>(i)] +
                std::sqrt(cfg.noise_pcm) * eps_rng.normal();
      pcm.rows.push_back(r);
    }
  ObservationBlock aqum{SourceId::aqum, TemporalResolution::daily, {}};
  for (int t = 1; t <= cfg.n_days; ++t)
    for (std::size_t i = 0; i < aqum_cells.size(); ++i) {
      ObservationRow r;
      r.loc = aqum_cells[i];
      r.day = t;
      r.value = cfg.alpha_aqum + cfg.lambda_12 * z1_aqum[static_cast<Eigen::Index>(i)] +
                z2[t - 1] + std::sqrt(cfg.noise_aqum) * eps_rng.normal();
      aqum.rows.push_back(r);
    }
  ObservationBlock mon{SourceId::monitors, TemporalResolution::daily, {}};
  out.truth.eta_monitors = Mat(cfg.n_monitors, cfg.n_days);
  for (int m = 0; m < cfg.n_monitors; ++m) {
    const double beta = types[m] == 1 ? cfg.beta_urb : (types[m] == 2 ? cfg.beta_rks : 0.0);
    for (int t = 1; t <= cfg.n_days; ++t) {
      const double eta = cfg.alpha_monitors + beta + cfg.lambda_13 * z1_mon[m] +
                         cfg.lambda_23 * z2[t - 1] + z3(types[m], t - 1);
      out.truth.eta_monitors(m, t - 1) = eta;
      ObservationRow r;
      r.monitor_id = "m" + std::to_string(m);
      r.sitetype = types[m];
      r.loc = locs[m];
      r.day = t;
      r.value = eta + std::sqrt(cfg.noise_monitors) * eps_rng.normal();
      mon.rows.push_back(r);
    }
  }
  out.blocks = {pcm, aqum, mon};

  out.truth.hyper = {{"noise_pcm", cfg.noise_pcm},
                     {"noise_aqum", cfg.noise_aqum},
                     {"noise_monitors", cfg.noise_monitors},
                     {"spatial_sd", cfg.spatial_sigma},
                     {"spatial_range", cfg.spatial_range},
                     {"trend_var", cfg.trend_var},
                     {"sitetype_var", cfg.sitetype_var},
                     {"sitetype_ar", cfg.sitetype_ar},
                     {"scale_spatial_aqum", cfg.lambda_12},
                     {"scale_spatial_monitors", cfg.lambda_13},
                     {"scale_trend_monitors", cfg.lambda_23}};
  out.truth.fixed = {{"alpha_pcm", cfg.alpha_pcm},
                     {"alpha_aqum", cfg.alpha_aqum},
                     {"alpha_monitors", cfg.alpha_monitors},
                     {"beta_URB", cfg.beta_urb},
                     {"beta_RKS", cfg.beta_rks}};
  out.truth.spatial_field = z1;
  out.truth.daily_trend = z2;
  out.truth.sitetype_trend = z3;
  out.truth.monitor_ids.resize(cfg.n_monitors);
  for (int m = 0; m < cfg.n_monitors; ++m) out.truth.monitor_ids[m] = "m" + std::to_string(m);
  out.truth.monitor_sitetype = types;
  out.truth.monitor_locs = locs;
  return out;
}

// Round-robin fold assignment within each site type, mirroring the grouped
// cross-validation design.
inline std::map<std::string, int> assign_folds(const ObservationBlock& monitors, int n_folds) {
  std::map<std::string, int> fold;
  std::map<int, int> counter;
  for (const auto& r : monitors.rows) {
    if (fold.count(r.monitor_id)) continue;
    int& c = counter[r.sitetype];
    fold[r.monitor_id] = 1 + (c % n_folds);
    ++c;
  }
  return fold;
}

}  // namespace airfuse
