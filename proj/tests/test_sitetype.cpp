#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "airfuse/rng.hpp"
#include "airfuse/sitetype.hpp"

using namespace airfuse;

namespace {

RoadSet fixture_roads() {
  RoadSet roads;
  // a long major road along y = 0 and a minor road along x = 1 (km)
  roads.lines.push_back({RoadClass::major, {{-100.0, 0.0}, {100.0, 0.0}}});
  roads.lines.push_back({RoadClass::minor, {{1.0, -100.0}, {1.0, 100.0}}});
  return roads;
}

LandCoverRaster fixture_raster(int urban_code = 1, int rural_code = 2) {
  LandCoverRaster r;
  r.x0 = -100.0;
  r.y0 = -100.0;
  r.cell = 10.0;
  r.nx = 20;
  r.ny = 20;
  r.codes.assign(400, rural_code);
  // urban patch in the north-east quadrant
  for (int j = 10; j < 20; ++j)
    for (int i = 10; i < 20; ++i) r.codes[static_cast<std::size_t>(j) * 20 + i] = urban_code;
  r.legend = {{urban_code, 1}, {rural_code, 0}};
  return r;
}

}  // namespace

TEST_CASE("point-to-road distances") {
  auto roads = fixture_roads();
  CHECK(distance_to_roads({3.0, 0.0}, roads) == 0.0);
  CHECK(distance_to_roads({50.0, 0.007}, roads) == doctest::Approx(0.007).epsilon(1e-9));
  CHECK(distance_to_roads({50.0, 0.007}, roads, static_cast<int>(RoadClass::minor)) ==
        doctest::Approx(49.0).epsilon(1e-9));
  RoadSet empty;
  CHECK_THROWS(distance_to_roads({0, 0}, empty));

  SUBCASE("matches a brute-force oracle on random points") {
    RoadSet jumble;
    CounterRng rng(5);
    for (int l = 0; l < 12; ++l) {
      RoadSet::Polyline pl;
      pl.cls = l % 2 == 0 ? RoadClass::major : RoadClass::minor;
      const int nv = 2 + static_cast<int>(rng.uniform() * 5);
      for (int v = 0; v < nv; ++v) pl.vertices.push_back({40.0 * rng.uniform(), 40.0 * rng.uniform()});
      jumble.lines.push_back(pl);
    }
    for (int k = 0; k < 1000; ++k) {
      Point2D p{50.0 * rng.uniform() - 5.0, 50.0 * rng.uniform() - 5.0};
      double brute = std::numeric_limits<double>::infinity();
      for (const auto& line : jumble.lines)
        for (std::size_t i = 0; i + 1 < line.vertices.size(); ++i)
          brute = std::min(brute,
                           point_segment_distance(p, line.vertices[i], line.vertices[i + 1]));
      CHECK(distance_to_roads(p, jumble) == doctest::Approx(brute).epsilon(1e-9));
    }
  }

  SUBCASE("distance is 1-Lipschitz") {
    auto jumble = fixture_roads();
    CounterRng rng(6);
    for (int k = 0; k < 500; ++k) {
      Point2D p{30.0 * rng.uniform(), 30.0 * rng.uniform()};
      Point2D q{p.x + 0.5 * rng.normal(), p.y + 0.5 * rng.normal()};
      CHECK(std::abs(distance_to_roads(p, jumble) - distance_to_roads(q, jumble)) <=
            dist(p, q) + 1e-12);
    }
  }
}

TEST_CASE("classification rules") {
  auto roads = fixture_roads();
  auto raster = fixture_raster();
  const double m = 1e-3;  // metres in km

  // 3 m from the minor road, R1: kerbside
  CHECK(classify({1.0 + 3.0 * m, 50.0}, roads, raster, KerbsideRule::R1) == 2);
  // 30 m from the major road: R3 kerbside (within 50 m of a major road)
  CHECK(classify({50.0, 30.0 * m}, roads, raster, KerbsideRule::R3) == 2);
  // 30 m from the major road under R2 with rural land cover: rural
  CHECK(classify({-50.0, -30.0 * m}, roads, raster, KerbsideRule::R2) == 0);
  // same point in the urban patch: urban
  CHECK(classify({50.0, 50.0}, roads, raster, KerbsideRule::R2) == 1);

  SUBCASE("boundary ties are kerbside") {
    CHECK(classify({50.0, 4.0 * m}, roads, raster, KerbsideRule::R1) == 2);
    CHECK(classify({50.0, 10.0 * m}, roads, raster, KerbsideRule::R2) == 2);
    CHECK(classify({50.0, 50.0 * m}, roads, raster, KerbsideRule::R3) == 2);
    CHECK(classify({50.0, 50.0 * m + 1e-9}, roads, raster, KerbsideRule::R3) != 2);
  }

  SUBCASE("R1 kerbside implies R2 kerbside") {
    CounterRng rng(9);
    for (int k = 0; k < 1000; ++k) {
      Point2D p{180.0 * rng.uniform() - 90.0, 180.0 * rng.uniform() - 90.0};
      const int r1 = classify(p, roads, raster, KerbsideRule::R1);
      const int r2 = classify(p, roads, raster, KerbsideRule::R2);
      if (r1 == 2) CHECK(r2 == 2);
    }
  }

  SUBCASE("outside the raster errors") {
    CHECK_THROWS(classify({500.0, 500.0}, roads, raster, KerbsideRule::R1));
  }
}

TEST_CASE("accuracy") {
  std::vector<int> a = {0, 1, 2, 1}, b = {0, 1, 2, 1};
  CHECK(accuracy(a, b) == 1.0);
  std::vector<int> c = {1, 2, 0, 2};
  CHECK(accuracy(a, c) == 0.0);
  CHECK_THROWS(accuracy(a, {0, 1}));

  SUBCASE("constructed 125-point fixture scores 0.648") {
    std::vector<int> truth(125), pred(125);
    for (int i = 0; i < 125; ++i) {
      truth[i] = i % 3;
      pred[i] = i < 81 ? i % 3 : (i % 3 + 1) % 3;
    }
    CHECK(accuracy(pred, truth) == doctest::Approx(0.648).epsilon(1e-12));
  }
}

TEST_CASE("road and land-cover file formats") {
  const std::string roads_path = "sitetype_roads.csv";
  {
    std::ofstream f(roads_path);
    f << "road_id,class,vertex_index,x,y\n";
    f << "r1,major,0,-100,0\nr1,major,1,100,0\n";
    f << "r2,minor,1,1,100\nr2,minor,0,1,-100\n";  // out-of-order vertex indices
  }
  auto roads = read_roads_csv(roads_path);
  REQUIRE(roads.lines.size() == 2);
  CHECK(distance_to_roads({50.0, 0.007}, roads) == doctest::Approx(0.007).epsilon(1e-9));

  const std::string grid_path = "sitetype_cover.asc";
  const std::string legend_path = "sitetype_cover.legend";
  {
    std::ofstream f(grid_path);
    f << "ncols 4\nnrows 3\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n";
    f << "1 1 2 2\n2 2 2 2\n2 2 2 1\n";  // top row first
    std::ofstream l(legend_path);
    l << "1 urban\n2 rural\n";
  }
  auto cover = read_landcover(grid_path, legend_path);
  CHECK(cover.nx == 4);
  CHECK(cover.ny == 3);
  // bottom-left cell holds the last row's first value
  CHECK(cover.landcover_at({5.0, 5.0}) == 0);
  CHECK(cover.landcover_at({35.0, 5.0}) == 1);   // bottom-right: urban
  CHECK(cover.landcover_at({5.0, 25.0}) == 1);   // top-left: urban
  CHECK_THROWS(cover.landcover_at({1000.0, 0.0}));

  std::remove(roads_path.c_str());
  std::remove(grid_path.c_str());
  std::remove(legend_path.c_str());
}
