#include "support.hpp"

#include "sonargen/conditioning.hpp"

#include <doctest.h>

using namespace sonargen;

namespace {

AttitudeSeries series(std::initializer_list<std::pair<int, double>> segments) {
  AttitudeSeries a;
  for (auto [n, yaw] : segments) a.yaw_deg.insert(a.yaw_deg.end(), std::size_t(n), yaw);
  return a;
}

ScanTile constant_tile(int rows, int cols, float v, int valid) {
  ScanTile t;
  t.intensity = Image::Constant(rows, cols, v);
  t.valid_rows = valid;
  return t;
}

SemanticTile label_tile(int rows, int cols, TerrainLabel l) {
  SemanticTile s;
  s.labels = LabelGrid::Constant(rows, cols, std::uint8_t(l));
  s.valid_rows = rows;
  return s;
}

}  // namespace

TEST_CASE("turn metric examples") {
  SUBCASE("constant heading") {
    const auto y = yaw_metric_series(series({{120, -45.0}}));
    for (std::size_t t = 0; t < y.theta.size(); ++t) {
      CHECK(y.theta[t] == 5.0);
      CHECK(y.sign[t] == 0);
    }
  }
  SUBCASE("two degrees over the lookahead") {
    const auto s = yaw_metric(series({{50, 0.0}, {1, 2.0}}), 0);
    CHECK(s.theta == 10.0);
    CHECK(s.sign == -1);
  }
  SUBCASE("shortest arc across the wrap") {
    const auto s = yaw_metric(series({{50, 179.0}, {1, -179.0}}), 0);
    CHECK(s.theta == 10.0);
    CHECK(s.sign == -1);
  }
  SUBCASE("clamped lookahead on a straight tail") {
    const auto a = series({{30, 0.0}, {70, 40.0}});
    const auto s = yaw_metric(a, a.length() - 1);
    CHECK(s.theta == 5.0);
    CHECK(s.sign == 0);
  }
  SUBCASE("under one degree stays on the floor but keeps its sign") {
    const auto s = yaw_metric(series({{50, 10.0}, {1, 9.5}}), 0);
    CHECK(s.theta == 5.0);
    CHECK(s.sign == 1);
  }
}

TEST_CASE("turn metric floor holds on random headings") {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-180.0, 180.0);
  AttitudeSeries a;
  for (int i = 0; i < 500; ++i) a.yaw_deg.push_back(u(rng));
  const auto y = yaw_metric_series(a);
  for (std::size_t t = 0; t < y.theta.size(); ++t) {
    CHECK(y.theta[t] >= 5.0);
    CHECK(y.theta[t] <= 5.0 * 180.0);
    CHECK(std::abs(y.sign[t]) <= 1);
  }
}

TEST_CASE("yaw channels") {
  const int H = 6, W = 5;
  SUBCASE("no turn") {
    const auto [cw, ccw] = yaw_channels(std::vector<double>(H, 200.0), std::vector<int>(H, 0), H, W, 450);
    CHECK(cw.isZero(0));
    CHECK(ccw.isZero(0));
  }
  SUBCASE("saturated clockwise") {
    const auto [cw, ccw] = yaw_channels(std::vector<double>(H, 450.0), std::vector<int>(H, 1), H, W, 450);
    CHECK((cw.array() == 1.0f).all());
    CHECK(ccw.isZero(0));
  }
  SUBCASE("alternating signs give complementary rows") {
    std::vector<int> sign;
    for (int r = 0; r < H; ++r) sign.push_back(r % 2 ? -1 : 1);
    const auto [cw, ccw] = yaw_channels(std::vector<double>(H, 90.0), sign, H, W, 450);
    for (int r = 0; r < H; ++r) {
      CHECK(((cw.row(r).array() > 0) != (ccw.row(r).array() > 0)).all());
      CHECK((cw.row(r).array() * ccw.row(r).array() == 0.0f).all());
      CHECK(cw.row(r).maxCoeff() + ccw.row(r).maxCoeff() == doctest::Approx(0.2));
    }
  }
  SUBCASE("values clip at one") {
    const auto [cw, ccw] = yaw_channels(std::vector<double>(H, 900.0), std::vector<int>(H, -1), H, W, 450);
    CHECK((ccw.array() == 1.0f).all());
    CHECK(cw.isZero(0));
  }
}

TEST_CASE("snippet extraction") {
  SUBCASE("constant predecessor") {
    const auto prev = constant_tile(116, 8, 0.7f, 116);
    const auto s = extract_snippet(&prev, 8, 8);
    CHECK(s.rows.rows() == 8);
    CHECK((s.rows.array() == 0.7f).all());
  }
  SUBCASE("cold start") {
    const auto s = extract_snippet(nullptr, 32, 8);
    CHECK(s.rows.rows() == 32);
    CHECK(s.rows.isZero(0));
    CHECK_FALSE(s.source_tile_index.has_value());
  }
  SUBCASE("short predecessor is padded above") {
    ScanTile prev = constant_tile(464, 8, 0.0f, 10);
    prev.tile_index = 3;
    for (int r = 0; r < 10; ++r) prev.intensity.row(r).setConstant(float(r + 1) / 10.0f);
    const auto s = extract_snippet(&prev, 32, 8);
    CHECK(s.rows.topRows(22).isZero(0));
    for (int r = 0; r < 10; ++r) CHECK(s.rows(22 + r, 0) == float(r + 1) / 10.0f);
    CHECK(s.source_tile_index == 3);
  }
  SUBCASE("bottom valid rows are taken, padding ignored") {
    ScanTile prev = constant_tile(20, 4, 1.0f, 12);
    prev.intensity.topRows(12).setConstant(0.25f);
    const auto s = extract_snippet(&prev, 4, 4);
    CHECK((s.rows.array() == 0.25f).all());
  }
}

TEST_CASE("generator input channels") {
  const int H = 464, W = 16;
  SUBCASE("flat map, zero conditions") {
    const auto block = make_conditioning(extract_snippet(nullptr, 32, W), {std::vector<double>(H, 5.0), std::vector<int>(H, 0)}, H, W, 450);
    const auto in = assemble_generator_input(label_tile(H, W, TerrainLabel::flat), block);
    CHECK(in.channels.channels() == 4);
    CHECK(in.channels.data.isZero(0));
  }
  SUBCASE("rocks map") {
    const auto block = make_conditioning(extract_snippet(nullptr, 32, W), {std::vector<double>(H, 5.0), std::vector<int>(H, 0)}, H, W, 450);
    const auto in = assemble_generator_input(label_tile(H, W, TerrainLabel::rocks), block);
    CHECK((in.channel(kMapChannel).array() == 0.5f).all());
  }
  SUBCASE("snippet of ones") {
    const auto prev = constant_tile(H, W, 1.0f, H);
    const auto block = make_conditioning(extract_snippet(&prev, 32, W), {std::vector<double>(H, 5.0), std::vector<int>(H, 0)}, H, W, 450);
    const auto ch = assemble_generator_input(label_tile(H, W, TerrainLabel::flat), block).channel(kSnippetChannel);
    CHECK((ch.topRows(32).array() == 1.0f).all());
    CHECK(ch.bottomRows(H - 32).isZero(0));
  }
  SUBCASE("every source is recoverable from its slot") {
    std::mt19937 rng(2);
    std::uniform_real_distribution<float> u(0, 1);
    ScanTile prev = constant_tile(H, W, 0, H);
    for (Eigen::Index i = 0; i < prev.intensity.size(); ++i) prev.intensity.data()[i] = u(rng);
    SemanticTile map = label_tile(H, W, TerrainLabel::flat);
    for (Eigen::Index i = 0; i < map.labels.size(); ++i) map.labels.data()[i] = std::uint8_t(rng() % kNumLabels);
    YawMetric yaw;
    for (int r = 0; r < H; ++r) {
      yaw.theta.push_back(5.0 + 400.0 * u(rng));
      yaw.sign.push_back(int(rng() % 3) - 1);
    }
    const auto block = make_conditioning(extract_snippet(&prev, 32, W), yaw, H, W, 450);
    const auto in = assemble_generator_input(map, block);
    CHECK(in.channel(kMapChannel) == normalize_labels(map.labels));
    CHECK(in.channel(kYawCwChannel) == block.yaw_cw);
    CHECK(in.channel(kYawCcwChannel) == block.yaw_ccw);
    CHECK(in.channel(kSnippetChannel) == pad_snippet(block.snippet, H));
    CHECK(in.channels.data.minCoeff() >= 0.0f);
    CHECK(in.channels.data.maxCoeff() <= 1.0f);
    for (int r = 0; r < H; ++r) CHECK((block.yaw_cw(r, 0) == 0.0f || block.yaw_ccw(r, 0) == 0.0f));
  }
}

TEST_CASE("discriminator input") {
  const int H = 32, W = 8;
  const auto map = label_tile(H, W, TerrainLabel::flat);
  const auto snippet = extract_snippet(nullptr, 4, W);
  const Image real = Image::Constant(H, W, 0.6f), fake = Image::Constant(H, W, 0.2f);
  const auto a = assemble_discriminator_input(map, snippet, real);
  const auto b = assemble_discriminator_input(map, snippet, fake);
  CHECK(a.channels.channels() == 3);
  CHECK(a.channel(kDiscMapChannel).isZero(0));
  CHECK(a.channel(kDiscSnippetChannel).isZero(0));
  CHECK(a.channel(kDiscMapChannel) == b.channel(kDiscMapChannel));
  CHECK(a.channel(kDiscSnippetChannel) == b.channel(kDiscSnippetChannel));
  CHECK(a.channel(kDiscImageChannel) != b.channel(kDiscImageChannel));
  CHECK_THROWS(DiscriminatorInput(nn::FeatureMap<float>(H, W, 4)));
  CHECK_NOTHROW(DiscriminatorInput(nn::FeatureMap<float>(H, W, 3)));
}
