#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "airfuse/baselines.hpp"
#include "airfuse/gpp.hpp"
#include "airfuse/rng.hpp"

using namespace airfuse;

TEST_CASE("gpp correlation structure") {
  std::vector<Point2D> knots = {{0, 0}, {10, 0}, {0, 10}, {10, 10}, {5, 5}};
  const double phi = 0.08;

  SUBCASE("unit correlation at a knot") {
    CHECK(gpp_correlation(knots, knots[2], knots[2], phi) == doctest::Approx(1.0).epsilon(1e-10));
  }

  SUBCASE("single-knot algebra") {
    std::vector<Point2D> one = {{3.0, 3.0}};
    Point2D a{1.0, 3.0}, b{5.0, 3.0};  // symmetric about the knot
    const double ca = std::exp(-dist(a, one[0]) * phi);
    const double cb = std::exp(-dist(b, one[0]) * phi);
    CHECK(ca == doctest::Approx(cb).epsilon(1e-14));
    CHECK(gpp_correlation(one, a, b, phi) == doctest::Approx(ca * cb).epsilon(1e-12));
    CHECK(gpp_correlation(one, a, one[0], phi) == doctest::Approx(ca).epsilon(1e-12));
  }

  SUBCASE("equal separation, different placement: correlations differ") {
    Point2D a1{5.0, 5.0}, b1{8.0, 5.0};   // near the central knot
    Point2D a2{0.0, 5.0}, b2{3.0, 5.0};   // off to the side
    const double c1 = gpp_correlation(knots, a1, b1, phi);
    const double c2 = gpp_correlation(knots, a2, b2, phi);
    CHECK(std::abs(dist(a1, b1) - dist(a2, b2)) < 1e-12);
    CHECK(std::abs(c1 - c2) > 1e-3);
  }

  SUBCASE("symmetry and boundedness on random pairs") {
    CounterRng rng(7);
    for (int k = 0; k < 10000; ++k) {
      Point2D a{12.0 * rng.uniform() - 1.0, 12.0 * rng.uniform() - 1.0};
      Point2D b{12.0 * rng.uniform() - 1.0, 12.0 * rng.uniform() - 1.0};
      const double cab = gpp_correlation(knots, a, b, phi);
      const double cba = gpp_correlation(knots, b, a, phi);
      CHECK(cab == doctest::Approx(cba).epsilon(1e-9));
      CHECK(cab <= 1.0 + 1e-9);
      CHECK(cab >= -1.0 - 1e-9);
    }
  }

  SUBCASE("duplicate knots are singular") {
    std::vector<Point2D> dup = {{0, 0}, {0, 0}, {5, 5}};
    CHECK_THROWS(gpp_correlation(dup, {1, 1}, {2, 2}, phi));
  }
}

namespace {

// pure predictive-process data: gamma's aside from zero intercept, with the
// residual field drawn from the model itself
ObservationBlock gpp_draw(const std::vector<Point2D>& sites, const std::vector<Point2D>& knots,
                          int n_days, double phi, double sigma2, double rho_ar, double noise_var,
                          std::uint64_t seed) {
  CounterRng rng(seed);
  const int m = static_cast<int>(knots.size());
  Mat h = exp_corr_matrix(knots, phi);
  Eigen::LLT<Mat> h_llt(h);
  Mat h_chol = h_llt.matrixL();
  // AR(1)-linked knot values across days
  Mat nu_star(m, n_days);
  for (int t = 0; t < n_days; ++t) {
    Vec z(m);
    for (int i = 0; i < m; ++i) z[i] = rng.normal();
    Vec innov = std::sqrt(sigma2) * (h_chol * z);
    if (t == 0)
      nu_star.col(0) = innov;
    else
      nu_star.col(t) = rho_ar * nu_star.col(t - 1) + std::sqrt(1.0 - rho_ar * rho_ar) * innov;
  }
  ObservationBlock mon{SourceId::monitors, TemporalResolution::daily, {}};
  for (std::size_t s = 0; s < sites.size(); ++s) {
    Vec w = h_llt.solve(gpp_cross_corr(knots, sites[s], phi));
    for (int t = 1; t <= n_days; ++t) {
      ObservationRow r;
      r.monitor_id = "s" + std::to_string(s);
      r.sitetype = static_cast<int>(s) % 3;
      r.loc = sites[s];
      r.day = t;
      r.covariates = {};
      r.value = w.dot(nu_star.col(t - 1)) + std::sqrt(noise_var) * rng.normal();
      mon.rows.push_back(r);
    }
  }
  return mon;
}

}  // namespace

TEST_CASE("site-type regression columns") {
  CounterRng rng(3);
  ObservationBlock mon{SourceId::monitors, TemporalResolution::daily, {}};
  for (int s = 0; s < 6; ++s)
    for (int t = 1; t <= 3; ++t) {
      ObservationRow r;
      r.monitor_id = "s" + std::to_string(s);
      r.sitetype = s % 3;
      r.loc = {10.0 * s, 5.0};
      r.day = t;
      r.covariates = {rng.normal()};
      r.value = rng.normal();
      mon.rows.push_back(r);
    }
  GppOptions opt;
  opt.knots = {{0, 0}, {25, 10}, {50, 0}};
  auto spec = build_gpp_spec(mon, opt);
  BlockDesign d(spec, nullptr);
  Vec psi = initial_psi(d.hypers());
  Mat a = Mat(d.design(psi));

  // rural rows: baseline intercept and slope only
  for (std::size_t i = 0; i < mon.rows.size(); ++i) {
    const auto& r = mon.rows[i];
    const double x1 = r.covariates[0];
    CHECK(a(i, d.fixed_col("gamma0")) == 1.0);
    CHECK(a(i, d.fixed_col("gamma_x1")) == doctest::Approx(x1).epsilon(1e-15));
    if (r.sitetype == 0) {
      CHECK(a(i, d.fixed_col("gamma0_URB")) == 0.0);
      CHECK(a(i, d.fixed_col("gamma0_RKS")) == 0.0);
      CHECK(a(i, d.fixed_col("gamma_x1_URB")) == 0.0);
      CHECK(a(i, d.fixed_col("gamma_x1_RKS")) == 0.0);
    } else if (r.sitetype == 1) {
      CHECK(a(i, d.fixed_col("gamma0_URB")) == 1.0);
      CHECK(a(i, d.fixed_col("gamma_x1_URB")) == doctest::Approx(x1).epsilon(1e-15));
      CHECK(a(i, d.fixed_col("gamma0_RKS")) == 0.0);
    }
  }

  // with zero latent field the prediction is the regression part alone
  Vec theta = Vec::Zero(d.n_cols());
  theta[d.fixed_col("gamma0")] = 0.7;
  theta[d.fixed_col("gamma_x1")] = 1.4;
  Vec row = d.predictor_row({12.0, 5.0}, 2, 0, {2.0}, psi);
  CHECK(row.dot(theta) == doctest::Approx(0.7 + 1.4 * 2.0).epsilon(1e-12));
}

TEST_CASE("knots at all sites make the predictive process exact") {
  CounterRng rng(17);
  std::vector<Point2D> sites;
  for (int i = 0; i < 20; ++i)
    sites.push_back({100.0 * rng.uniform(), 100.0 * rng.uniform()});
  auto mon = gpp_draw(sites, sites, 5, 0.05, 0.4, 0.4, 0.01, 77);

  GppOptions low;
  low.knots = sites;
  low.stationary = false;
  auto spec_gpp = build_gpp_spec(mon, low);
  GppOptions full = low;
  full.stationary = true;
  auto spec_gp = build_gpp_spec(mon, full);

  BlockDesign d_gpp(spec_gpp, nullptr), d_gp(spec_gp, nullptr);
  REQUIRE(d_gpp.n_cols() == d_gp.n_cols());
  CounterRng prng(5);
  for (int rep = 0; rep < 3; ++rep) {
    Vec psi = initial_psi(d_gpp.hypers());
    for (int i = 0; i < psi.size(); ++i) psi[i] += 0.2 * prng.normal();
    const int ar = hyper_index(d_gpp.hypers(), "field_ar");
    if (ar >= 0) psi[ar] = std::clamp(psi[ar], -0.9, 0.9);
    const double ev_gpp = log_evidence(d_gpp, psi);
    const double ev_gp = log_evidence(d_gp, psi);
    CHECK(ev_gpp == doctest::Approx(ev_gp).epsilon(1e-9));
  }
}

TEST_CASE("decay recovery from pure predictive-process draws") {
  CounterRng rng(23);
  const double phi_true = 0.05;
  std::vector<double> ratios;
  for (int seed = 0; seed < 10; ++seed) {
    std::vector<Point2D> sites;
    CounterRng srng(400 + seed);
    for (int i = 0; i < 40; ++i)
      sites.push_back({100.0 * srng.uniform(), 100.0 * srng.uniform()});
    std::vector<Point2D> knots = regular_knots(sites, 5, 5);
    auto mon = gpp_draw(sites, knots, 15, phi_true, 0.5, 0.4, 0.005, 600 + seed);
    GppOptions opt;
    opt.knots = knots;
    FitOptions fopts;
    fopts.strategy = ExploreStrategy::empirical_bayes;
    auto res = fit_gpp_model(mon, opt, fopts);
    const double phi_hat = std::exp(res.fit.psi_mode[hyper_index(res.fit.hypers, "field_decay")]);
    ratios.push_back(std::abs(std::log(phi_hat / phi_true)));
  }
  std::sort(ratios.begin(), ratios.end());
  CHECK(ratios[ratios.size() / 2] <= std::log(2.0));
}
