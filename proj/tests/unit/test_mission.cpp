#include "support.hpp"

#include "sonargen/procedural.hpp"

#include <doctest.h>

using namespace sonargen;
using namespace sonargen::test;

TEST_CASE("straight leg ping count and constant yaw") {
  const auto world = empty_world();
  const auto plan = plan_pings(straight_mission({20, 100}, {49, 100}), world);
  CHECK(plan.size() == 464);
  for (double y : plan.attitude.yaw_deg) CHECK(y == plan.attitude.yaw_deg[0]);
}

TEST_CASE("L-shaped route turns 90 degrees across the corner") {
  MissionSpec m = straight_mission({20, 100}, {49, 100});
  m.waypoints.push_back({49, 129});
  const auto plan = plan_pings(m, empty_world());
  CHECK(plan.size() == 928);
  const double change = wrap_degrees(plan.attitude.yaw_deg.back() - plan.attitude.yaw_deg.front());
  CHECK(std::abs(change) == doctest::Approx(90.0).epsilon(1e-9));
  CHECK(std::abs(std::abs(change) - 90.0) < 1e-6);
}

TEST_CASE("standard test mission length") {
  CHECK(ping_count(18750.0, 1.0, 16.0) == 300000);
  CHECK(ping_count(29.0, 1.0, 16.0) == 464);
}

TEST_CASE("ping count is linear in route length") {
  for (double len : {10.0, 17.3, 55.55, 123.4}) {
    const auto one = ping_count(len, 1.0, 16.0), two = ping_count(2 * len, 1.0, 16.0);
    CHECK(std::abs(double(two) - 2.0 * double(one)) <= 1.0);
  }
}

TEST_CASE("mission validation") {
  const auto world = empty_world();
  MissionSpec m = straight_mission({20, 100}, {49, 100});
  m.waypoints.pop_back();
  CHECK_THROWS_AS(plan_pings(m, world), ValidationError);
  m = straight_mission({20, 100}, {49, 100});
  m.speed_mps = 0;
  CHECK_THROWS_AS(plan_pings(m, world), ValidationError);
  m = straight_mission({20, 100}, {49, 100}, 126);
  CHECK_THROWS_AS(plan_pings(m, world), ValidationError);
  m = straight_mission({20, 100}, {49, 100});
  m.ping_rate_hz = -1;
  CHECK_THROWS_AS(plan_pings(m, world), ValidationError);
}

TEST_CASE("world map json round trip and validation") {
  WorldMap w = empty_world(300, 250);
  w.regions.push_back(box(10, 10, 50, 40, TerrainLabel::rocks));
  const nlohmann::json j = w;
  CHECK(j["format_version"] == kFormatVersion);
  const WorldMap back = parse_world_map(j);
  CHECK(nlohmann::json(back) == j);

  auto bad = j;
  bad["regions"][0]["label"] = "kelp";
  CHECK_THROWS_AS(parse_world_map(bad), ValidationError);
  bad = j;
  bad["format_version"] = 99;
  CHECK_THROWS_AS(parse_world_map(bad), ValidationError);
  bad = j;
  bad["regions"][0]["polygon"][1] = {400, 10};
  CHECK_THROWS_AS(parse_world_map(bad), ValidationError);
}

TEST_CASE("flat map rasterizes to flat rows with the nadir stripe") {
  const auto world = empty_world();
  const auto m = straight_mission({20, 100}, {49, 100});
  const auto plan = plan_pings(m, world);
  const auto rows = rasterize_rows(world, plan, SwathGeometry::of(m));
  CHECK(rows.rows() == 464);
  CHECK(rows.cols() == 128);
  CHECK((rows.leftCols(m.nadir_px).array() == std::uint8_t(TerrainLabel::nadir)).all());
  CHECK((rows.rightCols(128 - m.nadir_px).array() == std::uint8_t(TerrainLabel::flat)).all());
}

TEST_CASE("rocks polygon mid-swath gives one contiguous run") {
  WorldMap world = empty_world();
  // heading +x, starboard looks toward -y; rocks between 10 and 20 m out
  world.regions.push_back(box(0, 80, 200, 90, TerrainLabel::rocks));
  const auto m = straight_mission({20, 100}, {49, 100});
  const auto rows = rasterize_rows(world, plan_pings(m, world), SwathGeometry::of(m));
  for (Eigen::Index r = 0; r < rows.rows(); r += 37) {
    int transitions = 0, rocks = 0;
    for (Eigen::Index c = 1; c < rows.cols(); ++c) {
      if (rows(r, c) != rows(r, c - 1)) ++transitions;
      if (rows(r, c) == std::uint8_t(TerrainLabel::rocks)) ++rocks;
    }
    CHECK(transitions == 3);  // nadir|flat|rocks|flat
    CHECK(rocks == doctest::Approx(10.0 / 32.0 * 128).epsilon(0.05));
    CHECK(rows(r, rows.cols() - 1) == std::uint8_t(TerrainLabel::flat));
  }
}

TEST_CASE("port and starboard mirror over a symmetric map") {
  WorldMap world = empty_world();
  world.regions.push_back(box(0, 75, 200, 85, TerrainLabel::rocks));
  world.regions.push_back(box(0, 115, 200, 125, TerrainLabel::rocks));
  world.regions.push_back(box(0, 60, 200, 65, TerrainLabel::clutter));
  world.regions.push_back(box(0, 135, 200, 140, TerrainLabel::clutter));
  MissionSpec m = straight_mission({20, 100}, {49, 100});
  const auto plan = plan_pings(m, world);
  auto star = SwathGeometry::of(m);
  auto port = star;
  port.side = Side::port;
  const auto a = rasterize_rows(world, plan, star), b = rasterize_rows(world, plan, port);
  CHECK(a == b.rowwise().reverse().eval());
}

TEST_CASE("rasterization is deterministic") {
  const auto world = demo_world(5);
  const auto m = demo_route(60.0, 128);
  const auto plan = plan_pings(m, world);
  CHECK(rasterize_rows(world, plan, SwathGeometry::of(m)) == rasterize_rows(world, plan, SwathGeometry::of(m)));
}

TEST_CASE("tile counts") {
  const LabelGrid one = LabelGrid::Zero(464, 8);
  auto t = slice_tiles(one, 464, TerrainLabel::flat);
  REQUIRE(t.size() == 1);
  CHECK(t[0].valid_rows == 464);

  const LabelGrid more = LabelGrid::Constant(465, 8, std::uint8_t(TerrainLabel::rocks));
  t = slice_tiles(more, 464, TerrainLabel::flat);
  REQUIRE(t.size() == 2);
  CHECK(t[1].valid_rows == 1);
  CHECK((t[1].labels.bottomRows(463).array() == std::uint8_t(TerrainLabel::flat)).all());

  CHECK(tile_count(300000, 464) == 647);
  CHECK(646 * 464 == 299744);
}

TEST_CASE("slice and concatenate round trip") {
  std::mt19937 rng(4);
  for (int n : {1, 115, 116, 117, 1000}) {
    LabelGrid rows(n, 16);
    for (Eigen::Index i = 0; i < rows.size(); ++i) rows.data()[i] = std::uint8_t(rng() % kNumLabels);
    const auto tiles = slice_tiles(rows, 116, TerrainLabel::flat);
    CHECK(tiles.size() == tile_count(std::size_t(n), 116));
    CHECK(concatenate_valid_rows(tiles) == rows);
  }
}

TEST_CASE("lazy tile source matches whole-mission rasterization") {
  const auto world = demo_world(5);
  const auto m = demo_route(40.0, 64);
  const auto plan = plan_pings(m, world);
  const auto whole = slice_tiles(rasterize_rows(world, plan, SwathGeometry::of(m)), 116, world.background_label);
  SemanticTileSource src(world, plan, SwathGeometry::of(m), 116);
  REQUIRE(src.tile_total() == whole.size());
  for (std::size_t i = 0; i < whole.size(); ++i) {
    const auto t = src.tile(i);
    CHECK(t.valid_rows == whole[i].valid_rows);
    CHECK(t.labels == whole[i].labels);
  }
}
