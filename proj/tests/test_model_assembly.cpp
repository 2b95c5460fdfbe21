#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "airfuse/assemble.hpp"
#include "airfuse/dense_oracle.hpp"
#include "airfuse/gmrf.hpp"
#include "airfuse/inference.hpp"
#include "airfuse/model.hpp"
#include "airfuse/rng.hpp"

using namespace airfuse;

namespace {

std::shared_ptr<TriangleMesh> small_mesh(double extent = 10.0, double edge = 3.0) {
  CounterRng rng(21);
  std::vector<Point2D> pts;
  for (int i = 0; i < 12; ++i)
    pts.push_back({0.5 + (extent - 1.0) * rng.uniform(), 0.5 + (extent - 1.0) * rng.uniform()});
  return std::make_shared<TriangleMesh>(
      build_mesh(pts, Polygon::rectangle(0, 0, extent, extent), edge, 2.0 * edge, 1e-6));
}

// tiny misaligned dataset: a few grid cells and monitors over a handful of days
std::vector<ObservationBlock> tiny_blocks(int n_days, std::uint64_t seed) {
  CounterRng rng(seed);
  ObservationBlock pcm{SourceId::pcm, TemporalResolution::annual, {}};
  for (int year = 1; year <= 2; ++year)
    for (double x : {2.5, 7.5})
      for (double y : {2.5, 7.5}) {
        ObservationRow r;
        r.loc = {x, y};
        r.day = year;
        r.value = 2.0 + rng.normal();
        pcm.rows.push_back(r);
      }
  ObservationBlock aqum{SourceId::aqum, TemporalResolution::daily, {}};
  for (int t = 1; t <= n_days; ++t)
    for (double x : {3.0, 6.5}) {
      ObservationRow r;
      r.loc = {x, 5.0};
      r.day = t;
      r.value = 2.5 + rng.normal();
      aqum.rows.push_back(r);
    }
  ObservationBlock mon{SourceId::monitors, TemporalResolution::daily, {}};
  int id = 0;
  for (double x : {2.0, 5.0, 8.0}) {
    for (int t = 1; t <= n_days; ++t) {
      ObservationRow r;
      r.monitor_id = "m" + std::to_string(id);
      r.sitetype = id % 3;
      r.loc = {x, 4.0 + 0.5 * id};
      r.day = t;
      r.value = 2.4 + rng.normal();
      mon.rows.push_back(r);
    }
    ++id;
  }
  return {pcm, aqum, mon};
}

Vec mid_psi(const BlockDesign& d) {
  Vec psi = initial_psi(d.hypers());
  return psi;
}

}  // namespace

TEST_CASE("separate model variants have the stated structure") {
  auto blocks = tiny_blocks(3, 1);
  auto mesh = small_mesh();

  SUBCASE("annual source variant i is spatial only") {
    auto spec = build_separate_model(blocks[0], SeparateVariant::spatial_or_temporal);
    REQUIRE(spec.latents.size() == 1);
    CHECK(spec.latents[0].kind == LatentKind::matern_spde);
    BlockDesign d(spec, mesh);
    CHECK(d.n_latent_cols() == mesh->num_nodes());
    CHECK(d.fixed_names() == std::vector<std::string>{"alpha"});
  }

  SUBCASE("daily source variant i is temporal only") {
    auto spec = build_separate_model(blocks[1], SeparateVariant::spatial_or_temporal);
    REQUIRE(spec.latents.size() == 1);
    CHECK(spec.latents[0].kind == LatentKind::rw1);
  }

  SUBCASE("variant ii is additive") {
    auto spec = build_separate_model(blocks[1], SeparateVariant::additive);
    REQUIRE(spec.latents.size() == 2);
    CHECK(spec.latents[0].kind == LatentKind::matern_spde);
    CHECK(spec.latents[1].kind == LatentKind::rw1);
  }

  SUBCASE("variant iii latent dimension is the product") {
    TriangleMesh four;
    four.nodes = {{0, 0}, {10, 0}, {0, 10}, {10, 10}};
    four.triangles = {{0, 1, 2}, {1, 3, 2}};
    four.boundary = Polygon::rectangle(0, 0, 10, 10);
    auto spec = build_separate_model(blocks[1], SeparateVariant::interaction);
    BlockDesign d(spec, std::make_shared<TriangleMesh>(four));
    CHECK(d.latent("spacetime").size == 4 * 3);
    CHECK(d.constraints().rows() == 1);
  }
}

TEST_CASE("joint design mirrors the block structure") {
  auto blocks = tiny_blocks(3, 2);
  auto mesh = small_mesh();
  auto spec = build_joint_spec(blocks);
  BlockDesign d(spec, mesh);

  const int n_pcm = static_cast<int>(blocks[0].rows.size());
  const int n_aqum = static_cast<int>(blocks[1].rows.size());
  const int n_mon = static_cast<int>(blocks[2].rows.size());
  CHECK(d.n_rows() == n_pcm + n_aqum + n_mon);
  CHECK(d.block_row_range(SourceId::pcm) == std::pair<int, int>{0, n_pcm});
  CHECK(d.block_row_range(SourceId::monitors) ==
        std::pair<int, int>{n_pcm + n_aqum, n_pcm + n_aqum + n_mon});

  // latent layout: spatial field + daily trend + 3 sitetype replicates
  CHECK(d.latent("spatial_field").size == mesh->num_nodes());
  CHECK(d.latent("daily_trend").size == 3);
  CHECK(d.latent("sitetype_trend").size == 9);
  CHECK(d.latent("sitetype_trend").replicates == 3);

  // one sum-to-zero constraint from the random walk
  REQUIRE(d.constraints().rows() == 1);
  const auto& trend = d.latent("daily_trend");
  for (int i = 0; i < trend.size; ++i) CHECK(d.constraints()(0, trend.offset + i) == 1.0);

  SUBCASE("assembling twice is bit-identical") {
    BlockDesign d2(spec, mesh);
    Vec psi = mid_psi(d);
    Mat a1 = Mat(d.design(psi)), a2 = Mat(d2.design(psi));
    CHECK((a1 - a2).cwiseAbs().maxCoeff() == 0.0);
    Mat q1 = Mat(d.prior_precision(psi)), q2 = Mat(d2.prior_precision(psi));
    CHECK((q1 - q2).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("copy scaling enters the design linearly") {
  auto blocks = tiny_blocks(2, 3);
  // co-locate the first monitor with the first pcm cell
  blocks[2].rows[0].loc = blocks[0].rows[0].loc;
  auto mesh = small_mesh();

  SUBCASE("lambdas fixed at one make co-located rows share spatial weights") {
    JointModelOptions opt;
    opt.lambdas_free = false;
    auto spec = build_joint_spec(blocks, opt);
    BlockDesign d(spec, mesh);
    Vec psi = mid_psi(d);
    Mat a = Mat(d.design(psi));
    const auto& z1 = d.latent("spatial_field");
    const int pcm_row = d.block_row_range(SourceId::pcm).first;
    const int mon_row = d.block_row_range(SourceId::monitors).first;
    for (int c = 0; c < z1.size; ++c)
      CHECK(a(pcm_row, z1.offset + c) == doctest::Approx(a(mon_row, z1.offset + c)).epsilon(1e-15));
  }

  SUBCASE("doubling the monitor spatial scaling doubles exactly those columns") {
    auto spec = build_joint_spec(blocks);
    BlockDesign d(spec, mesh);
    Vec psi = mid_psi(d);
    const int lam_idx = hyper_index(d.hypers(), "scale_spatial_monitors");
    REQUIRE(lam_idx >= 0);
    psi[lam_idx] = 1.0;
    Mat a1 = Mat(d.design(psi));
    psi[lam_idx] = 2.0;
    Mat a2 = Mat(d.design(psi));
    const auto& z1 = d.latent("spatial_field");
    auto [mr0, mr1] = d.block_row_range(SourceId::monitors);
    auto [ar0, ar1] = d.block_row_range(SourceId::aqum);
    for (int r = mr0; r < mr1; ++r)
      for (int c = 0; c < z1.size; ++c)
        CHECK(a2(r, z1.offset + c) == doctest::Approx(2.0 * a1(r, z1.offset + c)).epsilon(1e-14));
    // aqum and pcm rows unchanged
    for (int r = 0; r < ar1; ++r)
      for (int c = 0; c < d.n_cols(); ++c)
        CHECK(a2(r, c) == doctest::Approx(a1(r, c)).epsilon(1e-14));
  }
}

TEST_CASE("tiny joint instance matches the dense oracle") {
  auto blocks = tiny_blocks(3, 4);
  auto mesh = small_mesh();
  auto spec = build_joint_spec(blocks);
  BlockDesign d(spec, mesh);
  REQUIRE(d.n_cols() <= 500);

  CounterRng rng(77);
  for (int rep = 0; rep < 3; ++rep) {
    Vec psi = mid_psi(d);
    for (int i = 0; i < psi.size(); ++i) psi[i] += 0.3 * rng.normal();
    // keep the AR coefficient inside its domain
    const int ar = hyper_index(d.hypers(), "sitetype_ar");
    psi[ar] = std::clamp(psi[ar], -0.9, 0.9);

    SpMat a = d.design(psi);
    SpMat qp = d.prior_precision(psi);
    Vec v = d.noise_variances(psi);
    ConditionalPosterior post(a, qp, d.constraints(), d.y(), v, d.masked());
    auto oracle = dense_oracle_posterior(Mat(a), Mat(qp), d.constraints(), d.y(), v, d.masked());

    CHECK((post.mean() - oracle.mean).cwiseAbs().maxCoeff() < 1e-8);
    Vec sd = post.marginal_sd();
    for (int i = 0; i < sd.size(); ++i)
      CHECK(std::abs(sd[i] - std::sqrt(oracle.covariance(i, i))) < 1e-6);

    const double ev = log_evidence_gaussian(a, qp, d.constraints(), d.y(), v, d.masked(), post);
    CHECK(ev == doctest::Approx(oracle.log_evidence).epsilon(1e-10));
  }
}

TEST_CASE("masking folds") {
  auto blocks = tiny_blocks(3, 5);
  auto mesh = small_mesh();
  auto spec = build_joint_spec(blocks);
  std::map<std::string, int> folds = {{"m0", 1}, {"m1", 1}, {"m2", 2}};

  SUBCASE("masking an empty fold changes nothing") {
    auto masked = mask_validation(spec, folds, 5);
    for (std::size_t b = 0; b < spec.blocks.size(); ++b)
      for (std::size_t r = 0; r < spec.blocks[b].rows.size(); ++r)
        CHECK(masked.blocks[b].rows[r].missing == spec.blocks[b].rows[r].missing);
  }

  SUBCASE("fold ids below one are rejected") {
    CHECK_THROWS(mask_validation(spec, folds, 0));
  }

  SUBCASE("unassigned monitors are rejected") {
    CHECK_THROWS(mask_validation(spec, {{"m0", 1}}, 1));
  }

  SUBCASE("masked rows stay in the design but drop from the likelihood") {
    auto masked_spec = mask_validation(spec, folds, 2);
    BlockDesign d(spec, mesh);
    BlockDesign dm(masked_spec, mesh);
    CHECK(dm.n_rows() == d.n_rows());
    int masked_count = 0;
    for (auto m : dm.masked()) masked_count += m;
    CHECK(masked_count == 3);  // monitor m2, 3 days

    // masking all monitors equals dropping the block from the likelihood
    auto all_masked = mask_validation(spec, {{"m0", 1}, {"m1", 1}, {"m2", 1}}, 1);
    BlockDesign da(all_masked, mesh);
    Vec psi = mid_psi(d);
    const double ev_masked = log_evidence(da, psi);
    // same model on pcm+aqum only, keeping the identical latent structure
    auto spec_nomon = all_masked;
    const double ev_again = log_evidence(BlockDesign(spec_nomon, mesh), psi);
    CHECK(ev_masked == doctest::Approx(ev_again).epsilon(1e-12));
    // and the monitor rows no longer contribute: removing their values changes nothing
    auto perturbed = all_masked;
    for (auto& b : perturbed.blocks)
      if (b.id == SourceId::monitors)
        for (auto& r : b.rows) r.value += 5.0;
    CHECK(log_evidence(BlockDesign(perturbed, mesh), psi) ==
          doctest::Approx(ev_masked).epsilon(1e-12));
  }
}

TEST_CASE("log posterior is invariant to latent declaration order") {
  auto blocks = tiny_blocks(3, 6);
  auto mesh = small_mesh();
  auto spec = build_joint_spec(blocks);
  auto reordered = spec;
  std::swap(reordered.latents[0], reordered.latents[2]);

  BlockDesign d1(spec, mesh), d2(reordered, mesh);
  Vec psi = mid_psi(d1);
  CHECK(log_evidence(d1, psi) == doctest::Approx(log_evidence(d2, psi)).epsilon(1e-12));
  CHECK(log_hyper_posterior(d1, psi) ==
        doctest::Approx(log_hyper_posterior(d2, psi)).epsilon(1e-12));
}

TEST_CASE("observation row order does not change the posterior") {
  auto blocks = tiny_blocks(3, 7);
  auto mesh = small_mesh();
  auto spec = build_joint_spec(blocks);
  auto shuffled = spec;
  // rotate monitor rows
  auto& rows = shuffled.blocks[2].rows;
  std::rotate(rows.begin(), rows.begin() + rows.size() / 2, rows.end());

  BlockDesign d1(spec, mesh), d2(shuffled, mesh);
  Vec psi = mid_psi(d1);
  CHECK(log_evidence(d1, psi) == doctest::Approx(log_evidence(d2, psi)).epsilon(1e-10));
  ConditionalPosterior p1(d1.design(psi), d1.prior_precision(psi), d1.constraints(), d1.y(),
                          d1.noise_variances(psi), d1.masked());
  ConditionalPosterior p2(d2.design(psi), d2.prior_precision(psi), d2.constraints(), d2.y(),
                          d2.noise_variances(psi), d2.masked());
  CHECK((p1.mean() - p2.mean()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("locations outside the mesh are rejected") {
  auto blocks = tiny_blocks(2, 8);
  blocks[2].rows[0].loc = {500.0, 500.0};
  auto mesh = small_mesh();
  auto spec = build_joint_spec(blocks);
  CHECK_THROWS(BlockDesign(spec, mesh));
}

TEST_CASE("unknown site types are rejected") {
  auto blocks = tiny_blocks(2, 9);
  blocks[2].rows[0].sitetype = 7;
  auto spec = build_joint_spec(blocks);
  CHECK_THROWS(BlockDesign(spec, small_mesh()));
}

TEST_CASE("indefinite precision signals a factorization error") {
  SpMat a(1, 2);
  a.insert(0, 0) = 1.0;
  Mat qd(2, 2);
  qd << 1.0, 2.0, 2.0, 1.0;  // indefinite
  SpMat q = sparse_from_dense(qd);
  Vec y(1), v(1);
  y[0] = 0.5;
  v[0] = 1.0;
  CHECK_THROWS_AS(ConditionalPosterior(a, q, Mat(0, 2), y, v, {0}), FactorizationError);
}
