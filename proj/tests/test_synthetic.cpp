#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "airfuse/matern.hpp"
#include "airfuse/dense_oracle.hpp"
#include "airfuse/synthetic.hpp"
#include "oracles.hpp"

using namespace airfuse;

namespace {
SyntheticConfig small_cfg() {
  SyntheticConfig cfg;
  cfg.pcm_nx = cfg.pcm_ny = 8;
  cfg.aqum_nx = cfg.aqum_ny = 3;
  cfg.n_monitors = 12;
  cfg.n_days = 10;
  cfg.mesh_edge_inner = 15.0;
  cfg.mesh_edge_outer = 30.0;
  return cfg;
}
}  // namespace

TEST_CASE("simulation is seed-deterministic") {
  auto cfg = small_cfg();
  auto a = simulate_joint(cfg, 42);
  auto b = simulate_joint(cfg, 42);
  REQUIRE(a.blocks.size() == b.blocks.size());
  for (std::size_t k = 0; k < a.blocks.size(); ++k) {
    REQUIRE(a.blocks[k].rows.size() == b.blocks[k].rows.size());
    for (std::size_t i = 0; i < a.blocks[k].rows.size(); ++i)
      CHECK(a.blocks[k].rows[i].value == b.blocks[k].rows[i].value);
  }
  auto c = simulate_joint(cfg, 43);
  CHECK(a.blocks[0].rows[0].value != c.blocks[0].rows[0].value);
}

TEST_CASE("row counts follow the grid arithmetic") {
  auto cfg = small_cfg();
  auto data = simulate_joint(cfg, 1);
  CHECK(data.blocks[0].rows.size() ==
        static_cast<std::size_t>(cfg.pcm_nx * cfg.pcm_ny * cfg.pcm_years));
  CHECK(data.blocks[1].rows.size() ==
        static_cast<std::size_t>(cfg.aqum_nx * cfg.aqum_ny * cfg.n_days));
  CHECK(data.blocks[2].rows.size() == static_cast<std::size_t>(cfg.n_monitors * cfg.n_days));
}

TEST_CASE("zero noise and unit scalings compose deterministically") {
  auto cfg = small_cfg();
  cfg.noise_pcm = cfg.noise_aqum = cfg.noise_monitors = 1e-300;
  cfg.lambda_12 = cfg.lambda_13 = cfg.lambda_23 = 1.0;
  auto data = simulate_joint(cfg, 9);
  // co-located pcm cell and monitor would differ by alpha difference + beta
  // + temporal terms; verify through the recorded truth instead
  const auto& t = data.truth;
  for (int m = 0; m < static_cast<int>(t.monitor_ids.size()); ++m) {
    const int st = t.monitor_sitetype[m];
    const double beta = st == 1 ? cfg.beta_urb : (st == 2 ? cfg.beta_rks : 0.0);
    auto proj = projector(*data.mesh, {t.monitor_locs[m]});
    const double z1m = Vec(proj.weights * t.spatial_field)[0];
    for (int d = 0; d < cfg.n_days; ++d) {
      const double want = cfg.alpha_monitors + beta + z1m + t.daily_trend[d] +
                          t.sitetype_trend(st, d);
      CHECK(t.eta_monitors(m, d) == doctest::Approx(want).epsilon(1e-10));
      // with zero noise the observation equals the linear predictor
      CHECK(data.blocks[2].rows[m * cfg.n_days + d].value ==
            doctest::Approx(want).epsilon(1e-7));
    }
  }
}

TEST_CASE("noise-dominated blocks show the configured variance") {
  auto cfg = small_cfg();
  cfg.n_days = 40;
  cfg.spatial_sigma = 1e-4;
  cfg.trend_var = 1e-12;
  cfg.sitetype_var = 1e-12;
  cfg.noise_pcm = 0.5;
  cfg.noise_aqum = 0.25;
  cfg.noise_monitors = 0.8;
  auto data = simulate_joint(cfg, 17);
  auto block_var = [](const ObservationBlock& b) {
    std::vector<double> v;
    for (const auto& r : b.rows) v.push_back(r.value);
    return oracles::variance(v);
  };
  CHECK(block_var(data.blocks[0]) == doctest::Approx(0.5).epsilon(0.05));
  CHECK(block_var(data.blocks[1]) == doctest::Approx(0.25).epsilon(0.05));
  CHECK(block_var(data.blocks[2]) == doctest::Approx(0.8).epsilon(0.05));
}

TEST_CASE("spatial field variogram tracks the Matern model") {
  SyntheticConfig cfg = small_cfg();
  cfg.spatial_sigma = 1.0;
  cfg.spatial_range = 30.0;
  cfg.mesh_edge_inner = 5.0;  // resolve the range well
  cfg.mesh_edge_outer = 10.0;
  const double lag = cfg.spatial_range / 2.0;
  double emp_sum = 0.0;
  long emp_n = 0;
  for (int rep = 0; rep < 50; ++rep) {
    auto data = simulate_joint(cfg, 100 + rep);
    const auto& mesh = *data.mesh;
    const Vec& z = data.truth.spatial_field;
    for (int i = 0; i < mesh.num_nodes(); ++i) {
      const auto& p = mesh.nodes[i];
      if (p.x < 15 || p.x > 85 || p.y < 15 || p.y > 85) continue;
      for (int j = i + 1; j < mesh.num_nodes(); ++j) {
        const auto& q = mesh.nodes[j];
        if (q.x < 15 || q.x > 85 || q.y < 15 || q.y > 85) continue;
        const double r = dist(p, q);
        if (std::abs(r - lag) > 2.0) continue;
        const double d = z[i] - z[j];
        emp_sum += 0.5 * d * d;
        ++emp_n;
      }
    }
  }
  REQUIRE(emp_n > 200);
  const double emp = emp_sum / static_cast<double>(emp_n);
  double lt, lk;
  params_from_range_sigma(cfg.spatial_range, cfg.spatial_sigma, 1.0, 2, lt, lk);
  const double want = cfg.spatial_sigma * cfg.spatial_sigma -
                      matern_cov(lag, cfg.spatial_sigma, std::exp(lk));
  CHECK(std::abs(emp - want) <= 0.20 * want);
}

TEST_CASE("fold assignment partitions monitors within site type") {
  auto data = simulate_joint(small_cfg(), 3);
  auto folds = assign_folds(data.blocks[2], 6);
  CHECK(folds.size() == data.truth.monitor_ids.size());
  for (const auto& [id, f] : folds) {
    CHECK(f >= 1);
    CHECK(f <= 6);
  }
}

TEST_CASE("geometry outside the mesh is rejected") {
  auto cfg = small_cfg();
  auto data = simulate_joint(cfg, 5);
  // dense oracle cap guard
  CHECK_THROWS(dense_oracle_posterior(Mat::Zero(1, 501), Mat::Identity(501, 501), Mat(0, 501),
                                      Vec::Zero(1), Vec::Ones(1), {}));
  (void)data;
}
