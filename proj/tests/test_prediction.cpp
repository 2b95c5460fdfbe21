#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "airfuse/fit_io.hpp"
#include "airfuse/prediction.hpp"
#include "airfuse/scoring.hpp"
#include "airfuse/synthetic.hpp"
#include "oracles.hpp"

using namespace airfuse;

namespace {

struct Fitted {
  SyntheticDataset data;
  JointModelSpec spec;
  std::shared_ptr<BlockDesign> design;
  FitResult fit;
};

Fitted fit_small_joint(std::uint64_t seed, ExploreStrategy strategy) {
  SyntheticConfig cfg;
  cfg.pcm_nx = cfg.pcm_ny = 8;
  cfg.aqum_nx = cfg.aqum_ny = 3;
  cfg.n_monitors = 14;
  cfg.n_days = 12;
  cfg.mesh_edge_inner = 12.0;
  cfg.mesh_edge_outer = 24.0;
  Fitted out{simulate_joint(cfg, seed), {}, nullptr, {}};
  out.spec = build_joint_spec(out.data.blocks);
  out.design = std::make_shared<BlockDesign>(out.spec, out.data.mesh);
  FitOptions opts;
  opts.strategy = strategy;
  out.fit = fit_model(*out.design, opts);
  return out;
}

}  // namespace

TEST_CASE("grid prediction consistency and invariances") {
  auto f = fit_small_joint(11, ExploreStrategy::empirical_bayes);
  REQUIRE(f.fit.converged);

  PredictionGrid grid;
  grid.x0 = 0;
  grid.y0 = 0;
  grid.cell = 25.0;
  grid.nx = grid.ny = 2;
  const auto& mon = f.data.blocks[2].rows[0];
  grid.cells = {mon.loc, {30.0, 60.0}, {60.0, 30.0}, {70.0, 70.0}};
  grid.sitetype = {mon.sitetype, 0, 1, 2};
  grid.days = {mon.day, 5};

  const int n_samples = 2000;
  auto pred = predict_eta3(f.fit, *f.design, grid, n_samples, 99);

  SUBCASE("grid cell at a monitor matches the design-row mixture mean") {
    // eta for the monitor's design row under the mixture
    double want = 0.0;
    for (const auto& p : f.fit.points) {
      const Vec row = f.design->predictor_row(mon.loc, mon.day, mon.sitetype, {}, p.psi);
      want += p.weight * row.dot(p.latent_mean);
    }
    const double got = pred.mean[0][0];
    const double mc_se = pred.sd[0][0] / std::sqrt(static_cast<double>(n_samples));
    CHECK(std::abs(got - want) <= 3.0 * mc_se);
  }

  SUBCASE("sitetype difference decomposes linearly") {
    PredictionGrid g2 = grid;
    g2.cells = {{40.0, 40.0}, {40.0, 40.0}};
    g2.sitetype = {1, 0};  // URB vs RUR at the same location
    g2.days = {3};
    auto p2 = predict_eta3(f.fit, *f.design, g2, n_samples, 7);
    const double diff = p2.mean[0][0] - p2.mean[0][1];
    // E[beta_URB] + E[z3(t,URB) - z3(t,RUR)] from the same mixture
    double want = 0.0;
    for (const auto& p : f.fit.points) {
      want += p.weight * p.latent_mean[f.design->fixed_col("beta_URB")];
      const auto& z3 = f.design->latent("sitetype_trend");
      want += p.weight * (p.latent_mean[z3.offset + 1 * z3.rep_size + 2] -
                          p.latent_mean[z3.offset + 0 * z3.rep_size + 2]);
    }
    // same posterior draws cancel the shared terms, so the difference is
    // exact up to the draw-average of the two z3 components
    CHECK(std::abs(diff - want) <= 0.02 * std::max(0.1, std::abs(want)) + 0.01);
  }

  SUBCASE("translation consistency") {
    // shift every coordinate (mesh, data, grid) by a constant vector
    const double sx = 500.0, sy = -200.0;
    auto shifted = f.data;
    auto mesh2 = std::make_shared<TriangleMesh>(*f.data.mesh);
    for (auto& n : mesh2->nodes) {
      n.x += sx;
      n.y += sy;
    }
    for (auto& v : mesh2->boundary.vertices) {
      v.x += sx;
      v.y += sy;
    }
    auto spec2 = f.spec;
    for (auto& b : spec2.blocks)
      for (auto& r : b.rows) {
        r.loc.x += sx;
        r.loc.y += sy;
      }
    BlockDesign d2(spec2, mesh2);
    FitResult fit2 = f.fit;
    for (auto& p : fit2.points) p.posterior.reset();
    fit2.spec_hash = d2.spec_hash();
    ensure_posteriors(fit2, d2);
    PredictionGrid g2 = grid;
    for (auto& c : g2.cells) {
      c.x += sx;
      c.y += sy;
    }
    auto p2 = predict_eta3(fit2, d2, g2, 500, 31);
    auto p1 = predict_eta3(f.fit, *f.design, grid, 500, 31);
    for (std::size_t di = 0; di < grid.days.size(); ++di)
      CHECK((p1.mean[di] - p2.mean[di]).cwiseAbs().maxCoeff() < 1e-10);
  }

  SUBCASE("cells outside the mesh are rejected") {
    PredictionGrid g2 = grid;
    g2.cells[1] = {5000.0, 5000.0};
    CHECK_THROWS(predict_eta3(f.fit, *f.design, g2, 10, 1));
  }
}

TEST_CASE("all-zero latent samples give the fixed-effect sum") {
  auto f = fit_small_joint(13, ExploreStrategy::empirical_bayes);
  FitResult degenerate = f.fit;
  // collapse the posterior onto a point mass at a hand-set latent state
  Vec theta = Vec::Zero(f.design->n_cols());
  theta[f.design->fixed_col("alpha_monitors")] = 2.5;
  theta[f.design->fixed_col("beta_RKS")] = 0.4;
  degenerate.points[0].latent_mean = theta;
  Vec psi = degenerate.points[0].psi;
  const Vec row = f.design->predictor_row({50.0, 50.0}, 3, 2, {}, psi);
  CHECK(row.dot(theta) == doctest::Approx(2.9).epsilon(1e-12));
  const Vec row_rur = f.design->predictor_row({50.0, 50.0}, 3, 0, {}, psi);
  CHECK(row_rur.dot(theta) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("predictive samples") {
  auto f = fit_small_joint(17, ExploreStrategy::ccd);

  std::vector<PredictionSite> sites(2);
  sites[0] = {"a", {40.0, 40.0}, 1, 3, {}};
  sites[1] = {"b", {60.0, 55.0}, 0, 7, {}};

  SUBCASE("deterministic under a fixed seed") {
    auto s1 = predictive_samples(f.fit, *f.design, sites, 10, 20, 555);
    auto s2 = predictive_samples(f.fit, *f.design, sites, 10, 20, 555);
    REQUIRE(s1.draws.size() == s2.draws.size());
    for (std::size_t i = 0; i < s1.draws.size(); ++i)
      for (std::size_t k = 0; k < s1.draws[i].size(); ++k)
        CHECK(s1.draws[i][k] == s2.draws[i][k]);
    CHECK(s1.draws[0].size() == 200);
  }

  SUBCASE("zero noise collapses to eta draws") {
    auto s = predictive_samples(f.fit, *f.design, sites, 40, 5, 1, 0.0);
    // with sigma2 = 0 every n_y block repeats the same eta draw
    for (int e = 0; e < 40; ++e)
      for (int r = 1; r < 5; ++r)
        CHECK(s.draws[0][e * 5 + r] == doctest::Approx(s.draws[0][e * 5]).epsilon(1e-15));
  }

  SUBCASE("law of total variance") {
    const int n_eta = 60, n_y = 90;
    auto s = predictive_samples(f.fit, *f.design, sites, n_eta, n_y, 2024);
    auto s0 = predictive_samples(f.fit, *f.design, sites, n_eta, n_y, 2024, 0.0);
    // mixture mean of the noise variance
    double noise_mean = 0.0;
    const int noise_idx = hyper_index(f.fit.hypers, "noise_monitors");
    for (const auto& p : f.fit.points) noise_mean += p.weight * std::exp(p.psi[noise_idx]);
    for (std::size_t i = 0; i < sites.size(); ++i) {
      const double var_total = oracles::variance(s.draws[i]);
      const double var_eta = oracles::variance(s0.draws[i]);
      CHECK(std::abs(var_total - (var_eta + noise_mean)) <=
            0.05 * (var_eta + noise_mean) + 3e-4);
    }
  }

  SUBCASE("backtransform") {
    PredictiveSamples s;
    s.sites = sites;
    s.draws = {{0.0, 0.0, 0.0}, {1.0, 2.0, 0.5}};
    auto logs = s;
    backtransform(s, OutputScale::concentration);
    for (double v : s.draws[0]) CHECK(v == 1.0);
    // quantiles commute with exp
    std::vector<double> sorted_log = logs.draws[1], sorted_exp = s.draws[1];
    std::sort(sorted_log.begin(), sorted_log.end());
    std::sort(sorted_exp.begin(), sorted_exp.end());
    for (std::size_t i = 0; i < sorted_log.size(); ++i)
      CHECK(std::exp(sorted_log[i]) == doctest::Approx(sorted_exp[i]).epsilon(1e-12));
    // Jensen: mean of exp >= exp of mean
    double mean_log = 0.0, mean_exp = 0.0;
    for (std::size_t i = 0; i < logs.draws[1].size(); ++i) {
      mean_log += logs.draws[1][i];
      mean_exp += s.draws[1][i];
    }
    mean_log /= 3.0;
    mean_exp /= 3.0;
    CHECK(mean_exp >= std::exp(mean_log));
  }
}

TEST_CASE("held-out predictions equal masked fitted rows") {
  SyntheticConfig cfg;
  cfg.pcm_nx = cfg.pcm_ny = 8;
  cfg.aqum_nx = cfg.aqum_ny = 3;
  cfg.n_monitors = 10;
  cfg.n_days = 8;
  cfg.mesh_edge_inner = 14.0;
  cfg.mesh_edge_outer = 28.0;
  auto data = simulate_joint(cfg, 77);
  auto spec = build_joint_spec(data.blocks);
  auto folds = assign_folds(data.blocks[2], 2);
  auto masked_spec = mask_validation(spec, folds, 1);
  BlockDesign design(masked_spec, data.mesh);
  FitOptions opts;
  opts.strategy = ExploreStrategy::empirical_bayes;
  FitResult fit = fit_model(design, opts);

  // pick one masked row: its design-row fitted value is the prediction there
  const ObservationBlock* mon = nullptr;
  for (const auto& b : masked_spec.blocks)
    if (b.id == SourceId::monitors) mon = &b;
  int masked_row_in_block = -1;
  for (std::size_t i = 0; i < mon->rows.size(); ++i)
    if (mon->rows[i].missing) {
      masked_row_in_block = static_cast<int>(i);
      break;
    }
  REQUIRE(masked_row_in_block >= 0);
  const auto& r = mon->rows[masked_row_in_block];
  const int row = design.block_row_range(SourceId::monitors).first + masked_row_in_block;

  const Vec fitted = design.design(fit.points[0].psi) * fit.points[0].latent_mean;
  std::vector<PredictionSite> site(1);
  site[0] = {r.monitor_id, r.loc, r.sitetype, r.day, {}};
  auto samples = predictive_samples(fit, design, site, 200, 10, 5);
  double mean = 0.0;
  for (double v : samples.draws[0]) mean += v;
  mean /= static_cast<double>(samples.draws[0].size());
  double sd = 0.0;
  for (double v : samples.draws[0]) sd += (v - mean) * (v - mean);
  sd = std::sqrt(sd / (samples.draws[0].size() - 1.0));
  CHECK(std::abs(mean - fitted[row]) <= 3.0 * sd / std::sqrt(200.0));
}

TEST_CASE("gridded output files") {
  PredictionGrid grid = PredictionGrid::regular(0, 0, 10, 8, 2.0, 0);
  grid.days = {1};
  GridPrediction pred;
  const int n = static_cast<int>(grid.cells.size());
  pred.mean = {Vec::LinSpaced(n, 0.0, 1.0)};
  pred.sd = {Vec::Constant(n, 0.1)};
  pred.q025 = {Vec::Constant(n, -0.2)};
  pred.q975 = {Vec::Constant(n, 0.2)};

  write_esri_ascii("pred_test.asc", grid, pred.mean[0]);
  std::ifstream f("pred_test.asc");
  std::string key;
  int ncols, nrows;
  f >> key >> ncols >> key >> nrows;
  CHECK(ncols == grid.nx);
  CHECK(nrows == grid.ny);
  write_grid_csv("pred_test.csv", grid, pred);
  std::ifstream c("pred_test.csv");
  std::string header;
  std::getline(c, header);
  CHECK(header == "x,y,day,mean,sd,q025,q975");
  int lines = 0;
  std::string line;
  while (std::getline(c, line))
    if (!line.empty()) ++lines;
  CHECK(lines == n);
  std::remove("pred_test.asc");
  std::remove("pred_test.csv");
}
