#include "sonargen/procedural.hpp"

#include "sonargen/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

namespace sonargen {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash(std::uint64_t seed, std::int64_t a, std::int64_t b, std::uint64_t salt) {
  std::uint64_t h = mix(seed ^ (salt * 0xd6e8feb86659fd93ULL));
  h = mix(h ^ static_cast<std::uint64_t>(a));
  return mix(h ^ static_cast<std::uint64_t>(b) * 0x9e3779b97f4a7c15ULL);
}

// Uniform in (0, 1).
double unit(std::uint64_t h) { return (double(h >> 11) + 0.5) * 0x1.0p-53; }

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise in [-1, 1].
double noise1(std::uint64_t seed, double x, std::uint64_t salt) {
  const double f = std::floor(x);
  const auto i = static_cast<std::int64_t>(f);
  const double a = 2.0 * unit(hash(seed, i, 0, salt)) - 1.0;
  const double b = 2.0 * unit(hash(seed, i + 1, 0, salt)) - 1.0;
  return a + (b - a) * smooth(x - f);
}

double noise2(std::uint64_t seed, double x, double y, std::uint64_t salt) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  auto v = [&](std::int64_t dx, std::int64_t dy) { return 2.0 * unit(hash(seed, ix + dx, iy + dy, salt)) - 1.0; };
  const double sx = smooth(x - fx), sy = smooth(y - fy);
  const double top = v(0, 0) + (v(1, 0) - v(0, 0)) * sx;
  const double bot = v(0, 1) + (v(1, 1) - v(0, 1)) * sx;
  return top + (bot - top) * sy;
}

enum Salt : std::uint64_t { kSpeckle = 1, kFlat, kClutter, kRockCell, kRockX, kRockY, kRockR, kGain, kRipple };

struct Renderer {
  const OracleParams& p;
  std::uint64_t seed;
  int direction;  // +1 when range grows with column

  double gain(std::int64_t g) const {
    return 1.0 + p.gain_amplitude * noise1(seed, double(g) / p.gain_correlation_rows, kGain);
  }

  // Boulder coverage at (g, c): 1 highlight, -1 shadow, 0 none.
  int boulder(std::int64_t g, std::int64_t c) const {
    const double cell = p.rock_cell_px;
    const auto cg = static_cast<std::int64_t>(std::floor(g / cell));
    const int reach = int(std::ceil((p.rock_radius_max_px + p.rock_shadow_px) / cell)) + 1;
    const auto cc0 = static_cast<std::int64_t>(std::floor(c / cell));
    int result = 0;
    for (std::int64_t dg = -1; dg <= 1; ++dg) {
      for (int k = -reach; k <= 1; ++k) {
        const std::int64_t gi = cg + dg;
        const std::int64_t ci = cc0 + k * direction;
        if (unit(hash(seed, gi, ci, kRockCell)) > p.rock_density) continue;
        const double cy = (gi + unit(hash(seed, gi, ci, kRockY))) * cell;
        const double cx = (ci + unit(hash(seed, gi, ci, kRockX))) * cell;
        const double r =
            p.rock_radius_min_px + (p.rock_radius_max_px - p.rock_radius_min_px) * unit(hash(seed, gi, ci, kRockR));
        const double dy = double(g) - cy;
        const double along = (double(c) - cx) * direction;
        if (std::abs(dy) > r) continue;
        const double half = std::sqrt(r * r - dy * dy);
        if (std::abs(along) <= half) return 1;
        if (along > half && along <= half + p.rock_shadow_px * (1.0 - 0.5 * std::abs(dy) / r)) result = -1;
      }
    }
    return result;
  }

  double texture(TerrainLabel label, std::int64_t g, std::int64_t c) const {
    switch (label) {
      case TerrainLabel::flat:
        return p.flat_level * (1.0 + p.flat_variation * noise2(seed, c / 24.0, g / 24.0, kFlat));
      case TerrainLabel::ripples: {
        const double phase = double(g) / p.ripple_wavelength_px + p.ripple_slant * double(c);
        return p.ripple_level * (1.0 + p.ripple_depth * std::sin(2.0 * std::numbers::pi * phase));
      }
      case TerrainLabel::rocks: {
        const int b = boulder(g, c);
        if (b > 0) return p.rock_highlight;
        if (b < 0) return p.rock_shadow_level;
        return p.rock_level;
      }
      case TerrainLabel::clutter:
        return p.clutter_level *
               (1.0 + p.clutter_depth * noise2(seed, c / p.clutter_scale_px, g / p.clutter_scale_px, kClutter));
      case TerrainLabel::nadir:
        return p.nadir_level;
    }
    return 0.0;
  }

  // Unit-mean Rayleigh speckle mixed in with the configured strength.
  double speckle(std::int64_t g, std::int64_t c) const {
    const double u = unit(hash(seed, g, c, kSpeckle));
    const double rayleigh = std::sqrt(-2.0 * std::log(u)) * std::sqrt(2.0 / std::numbers::pi);
    return 1.0 + p.speckle * (rayleigh - 1.0);
  }

  double pixel(const SemanticTile& map, int r, std::int64_t g, std::int64_t c) const {
    const int col = static_cast<int>(std::clamp<std::int64_t>(c, 0, map.cols() - 1));
    const auto label = static_cast<TerrainLabel>(map.labels(r, col));
    return texture(label, g, c) * speckle(g, c);
  }
};

}  // namespace

void OracleParams::validate() const {
  std::vector<FieldError> errors;
  auto positive = [&](const char* name, double v) {
    if (!(v > 0)) errors.push_back({name, "must be positive"});
  };
  positive("flat_level", flat_level);
  positive("speckle", speckle);
  positive("ripple_level", ripple_level);
  positive("ripple_wavelength_px", ripple_wavelength_px);
  positive("ripple_depth", ripple_depth);
  positive("rock_level", rock_level);
  positive("rock_cell_px", rock_cell_px);
  positive("rock_density", rock_density);
  positive("rock_radius_min_px", rock_radius_min_px);
  positive("rock_highlight", rock_highlight);
  positive("rock_shadow_px", rock_shadow_px);
  positive("clutter_level", clutter_level);
  positive("clutter_scale_px", clutter_scale_px);
  positive("nadir_level", nadir_level);
  positive("gain_correlation_rows", gain_correlation_rows);
  positive("yaw_shear_gain", yaw_shear_gain);
  if (rock_radius_max_px < rock_radius_min_px) errors.push_back({"rock_radius_max_px", "below rock_radius_min_px"});
  if (rock_radius_max_px > rock_cell_px) errors.push_back({"rock_radius_max_px", "exceeds rock_cell_px"});
  if (gain_amplitude < 0 || gain_amplitude >= 1) errors.push_back({"gain_amplitude", "must lie in [0, 1)"});
  if (!errors.empty()) throw ValidationError(std::move(errors));
}

OracleParams OracleParams::scaled(double factor) const {
  OracleParams o = *this;
  o.ripple_wavelength_px *= factor;
  o.ripple_slant /= factor;
  o.rock_cell_px *= factor;
  o.rock_radius_min_px *= factor;
  o.rock_radius_max_px *= factor;
  o.rock_shadow_px *= factor;
  o.clutter_scale_px *= factor;
  o.gain_correlation_rows *= factor;
  o.yaw_shear_gain *= factor;
  return o;
}

#define SONARGEN_ORACLE_FIELDS(X)                                                                               \
  X(flat_level) X(flat_variation) X(speckle) X(ripple_level) X(ripple_wavelength_px) X(ripple_depth)          \
  X(ripple_slant) X(rock_level) X(rock_cell_px) X(rock_density) X(rock_radius_min_px) X(rock_radius_max_px) \
  X(rock_highlight) X(rock_shadow_px) X(rock_shadow_level) X(clutter_level) X(clutter_depth)                \
  X(clutter_scale_px) X(nadir_level) X(gain_amplitude) X(gain_correlation_rows) X(yaw_shear_gain)

void to_json(nlohmann::json& j, const OracleParams& p) {
  j = nlohmann::json::object();
#define X(f) j[#f] = p.f;
  SONARGEN_ORACLE_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, OracleParams& p) {
  OracleParams d;
#define X(f) p.f = j.value(#f, d.f);
  SONARGEN_ORACLE_FIELDS(X)
#undef X
}

ScanTile synth_tile(const SemanticTile& map, const std::vector<double>& theta_rows, const std::vector<int>& sign_rows,
                    std::uint64_t seed, const OracleParams& params, double theta_max, Side side) {
  const int H = map.rows(), W = map.cols();
  if (int(theta_rows.size()) != H || int(sign_rows.size()) != H)
    throw ValidationError("synth_tile: need one theta and sign per row");
  const Renderer ren{params, seed, side == Side::starboard ? 1 : -1};
  ScanTile out;
  out.tile_index = map.tile_index;
  out.valid_rows = map.valid_rows;
  out.provenance = Provenance::oracle;
  out.intensity.resize(H, W);
  for (int r = 0; r < H; ++r) {
    const std::int64_t g = std::int64_t(map.tile_index) * H + r;
    const double gain = ren.gain(g);
    const double shift = sign_rows[size_t(r)] * params.yaw_shear_gain * std::min(theta_rows[size_t(r)] / theta_max, 1.0);
    const double base = std::floor(shift);
    const double frac = shift - base;
    const auto s0 = static_cast<std::int64_t>(base);
    for (int c = 0; c < W; ++c) {
      // Content at column c comes from c - shift.
      const std::int64_t src = c - s0;
      double v = ren.pixel(map, r, g, src);
      if (frac > 0) v = (1.0 - frac) * v + frac * ren.pixel(map, r, g, src - 1);
      out.intensity(r, c) = static_cast<float>(std::clamp(v * gain, 0.0, 1.0));
    }
  }
  quantize16(out.intensity);
  return out;
}

// --- Corpus -----------------------------------------------------------------

void to_json(nlohmann::json& j, const CorpusMeta& m) {
  nlohmann::json labels = nlohmann::json::array();
  for (int i = 0; i < kNumLabels; ++i) labels.push_back(to_string(static_cast<TerrainLabel>(i)));
  j = {{"format_version", m.format_version},
       {"tile_rows", m.tile_rows},
       {"tile_cols", m.tile_cols},
       {"seed", m.seed},
       {"source", m.source},
       {"consecutive", m.consecutive},
       {"labels", labels},
       {"oracle", m.oracle},
       {"conditioning", m.conditioning},
       {"side", to_string(m.side)}};
}

void from_json(const nlohmann::json& j, CorpusMeta& m) {
  m.format_version = j.at("format_version").get<int>();
  m.tile_rows = j.at("tile_rows").get<int>();
  m.tile_cols = j.at("tile_cols").get<int>();
  m.seed = j.value("seed", std::uint64_t{0});
  m.source = j.value("source", std::string("oracle"));
  m.consecutive = j.value("consecutive", true);
  if (j.contains("oracle")) m.oracle = j["oracle"].get<OracleParams>();
  if (j.contains("conditioning")) m.conditioning = j["conditioning"].get<ConditioningConfig>();
  m.side = side_from_string(j.value("side", std::string("starboard")));
}

Corpus make_corpus(const WorldMap& world, const MissionSpec& route, int n_tiles, std::uint64_t seed,
                   const CorpusOptions& options) {
  if (n_tiles <= 0) throw ValidationError("make_corpus: n_tiles must be positive");
  options.oracle.validate();
  const int H = options.tile_rows;
  if (H <= 0) throw ValidationError("make_corpus: tile_rows must be positive");
  PingPlan plan = plan_pings(route, world);
  if (plan.size() < std::size_t(n_tiles) * std::size_t(H))
    throw ValidationError("make_corpus: route yields " + std::to_string(plan.size()) + " pings, need " +
                          std::to_string(std::size_t(n_tiles) * std::size_t(H)));
  const YawMetric yaw = yaw_metric_series(plan.attitude, options.conditioning.lookahead);
  const SwathGeometry swath = SwathGeometry::of(route);

  Corpus corpus;
  corpus.meta.tile_rows = H;
  corpus.meta.tile_cols = route.swath_px;
  corpus.meta.seed = seed;
  corpus.meta.oracle = options.oracle;
  corpus.meta.conditioning = options.conditioning;
  corpus.meta.side = route.side;
  corpus.examples.reserve(size_t(n_tiles));
  for (int t = 0; t < n_tiles; ++t) {
    const std::size_t begin = std::size_t(t) * std::size_t(H);
    CorpusExample ex;
    ex.map.labels = rasterize_rows(world, plan, swath, begin, begin + std::size_t(H));
    ex.map.tile_index = t;
    ex.map.valid_rows = H;
    ex.yaw = yaw_rows(yaw, begin, H);
    ex.yaw_deg.assign(plan.attitude.yaw_deg.begin() + std::ptrdiff_t(begin),
                      plan.attitude.yaw_deg.begin() + std::ptrdiff_t(begin + std::size_t(H)));
    ex.image = synth_tile(ex.map, ex.yaw.theta, ex.yaw.sign, seed, options.oracle, options.conditioning.theta_max(),
                          route.side);
    const ScanTile* prev = t > 0 ? &corpus.examples.back().image : nullptr;
    ex.snippet = extract_snippet(prev, options.conditioning.snippet_rows, route.swath_px);
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

namespace {

std::filesystem::path example_dir(const std::filesystem::path& dir, std::size_t i) {
  char name[16];
  std::snprintf(name, sizeof name, "%05zu", i);
  return dir / "tiles" / name;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw IoError("malformed JSON: " + path.string());
  return j;
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "tiles");
  for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
    const auto& ex = corpus.examples[i];
    const auto d = example_dir(dir, i);
    std::filesystem::create_directories(d);
    write_png8(d / "map.png", ex.map.labels);
    write_png16(d / "image.png", ex.image.intensity);
    nlohmann::json att = {{"yaw_deg", ex.yaw_deg},
                          {"theta", ex.yaw.theta},
                          {"sign", ex.yaw.sign},
                          {"tile_index", ex.map.tile_index},
                          {"valid_rows", ex.map.valid_rows}};
    write_file_atomic(d / "att.json", att.dump());
  }
  nlohmann::json meta = corpus.meta;
  meta["count"] = corpus.examples.size();
  write_file_atomic(dir / "meta.json", meta.dump(2));
}

Corpus load_corpus(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  if (!std::filesystem::exists(meta_path)) throw IoError("corpus has no meta.json: " + dir.string());
  const auto meta = read_json(meta_path);
  if (!meta.contains("format_version") || !meta["format_version"].is_number_integer())
    throw VersionError("corpus meta.json lacks format_version");
  const int version = meta["format_version"].get<int>();
  if (version != kFormatVersion)
    throw VersionError("corpus format_version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kFormatVersion) + ")");
  Corpus corpus;
  try {
    corpus.meta = meta.get<CorpusMeta>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corpus meta.json: ") + e.what());
  }
  const std::size_t count = meta.value("count", std::size_t{0});
  corpus.examples.reserve(count);
  const int H = corpus.meta.tile_rows, W = corpus.meta.tile_cols;
  for (std::size_t i = 0; i < count; ++i) {
    const auto d = example_dir(dir, i);
    const std::string name = "example " + d.filename().string();
    for (const char* f : {"map.png", "image.png", "att.json"})
      if (!std::filesystem::exists(d / f)) throw IoError(name + ": missing " + f);
    CorpusExample ex;
    ex.map.labels = read_png8(d / "map.png");
    ex.image.intensity = read_png16(d / "image.png");
    if (ex.map.rows() != H || ex.map.cols() != W || ex.image.rows() != H || ex.image.cols() != W)
      throw IoError(name + ": tile dimensions disagree with meta.json");
    if (ex.map.labels.maxCoeff() >= kNumLabels) throw IoError(name + ": label code out of range");
    const auto att = read_json(d / "att.json");
    try {
      ex.yaw_deg = att.at("yaw_deg").get<std::vector<double>>();
      ex.yaw.theta = att.at("theta").get<std::vector<double>>();
      ex.yaw.sign = att.at("sign").get<std::vector<int>>();
      ex.map.tile_index = att.value("tile_index", int(i));
      ex.map.valid_rows = att.value("valid_rows", H);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(name + ": att.json: " + e.what());
    }
    if (int(ex.yaw.theta.size()) != H || int(ex.yaw.sign.size()) != H)
      throw IoError(name + ": att.json needs one theta and sign per row");
    ex.image.tile_index = ex.map.tile_index;
    ex.image.valid_rows = ex.map.valid_rows;
    ex.image.provenance = corpus.meta.source == "real" ? Provenance::real : Provenance::oracle;
    const ScanTile* prev = (corpus.meta.consecutive && i > 0) ? &corpus.examples.back().image : nullptr;
    ex.snippet = extract_snippet(prev, corpus.meta.conditioning.snippet_rows, W);
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

// --- Demo geometry ----------------------------------------------------------

WorldMap demo_world(std::uint64_t seed, double width_m, double height_m) {
  WorldMap m;
  m.width_m = width_m;
  m.height_m = height_m;
  m.background_label = TerrainLabel::flat;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const TerrainLabel kinds[] = {TerrainLabel::ripples, TerrainLabel::rocks, TerrainLabel::clutter};
  const int n = static_cast<int>(width_m * height_m / 2400.0);
  for (int i = 0; i < n; ++i) {
    Region r;
    r.label = kinds[i % 3];
    const double cx = u(rng) * width_m, cy = u(rng) * height_m;
    const double radius = 8.0 + 22.0 * u(rng);
    const int verts = 5 + int(u(rng) * 4);
    const double rot = u(rng) * 2.0 * std::numbers::pi;
    for (int k = 0; k < verts; ++k) {
      const double a = rot + 2.0 * std::numbers::pi * k / verts;
      const double rr = radius * (0.6 + 0.4 * u(rng));
      r.polygon.emplace_back(std::clamp(cx + rr * std::cos(a), 0.0, width_m),
                             std::clamp(cy + rr * std::sin(a), 0.0, height_m));
    }
    m.regions.push_back(std::move(r));
  }
  return m;
}

MissionSpec demo_route(double length_m, int swath_px, double leg_m, double spacing_m, double extent_m) {
  MissionSpec m;
  m.map_id = "demo";
  m.swath_px = swath_px;
  m.nadir_px = std::max(1, static_cast<int>(std::lround(16.0 * swath_px / 512.0)));
  // Serpentine lanes climbing in y inside a band; a full band hands over to
  // the next band to the east, which runs back down.
  const double margin = 0.1 * extent_m, far = extent_m - margin;
  double band = margin, x = margin, y = margin, len = 0.0;
  int dir_y = 1;
  m.waypoints.emplace_back(x, y);
  auto go = [&](double nx, double ny) {
    len += std::hypot(nx - x, ny - y);
    x = nx;
    y = ny;
    m.waypoints.emplace_back(x, y);
  };
  while (len < length_m) {
    const bool at_west = x <= band + 1e-9;
    go(at_west ? band + leg_m : band, y);
    const double ny = y + dir_y * spacing_m;
    if (ny <= far && ny >= margin) {
      go(x, ny);
      continue;
    }
    band += leg_m + 2.0 * spacing_m;
    if (band + leg_m > far) throw ValidationError("demo_route: route does not fit in the map extent");
    dir_y = -dir_y;
    if (x < band) go(band, y);
  }
  return m;
}

double estimate_shift(const Image& image, const Image& reference, int max_shift) {
  if (image.rows() != reference.rows() || image.cols() != reference.cols())
    throw ValidationError("estimate_shift: shape mismatch");
  const int W = int(image.cols());
  max_shift = std::min(max_shift, W / 2);
  const Eigen::MatrixXd a = (image.cast<double>().colwise() - image.cast<double>().rowwise().mean()).eval();
  const Eigen::MatrixXd b = (reference.cast<double>().colwise() - reference.cast<double>().rowwise().mean()).eval();
  std::vector<double> score(size_t(2 * max_shift + 1));
  for (int s = -max_shift; s <= max_shift; ++s) {
    // image(c) ~ reference(c - s)
    const int c0 = std::max(0, s), c1 = std::min(W, W + s);
    const int n = c1 - c0;
    const double dot = (a.middleCols(c0, n).array() * b.middleCols(c0 - s, n).array()).sum();
    score[size_t(s + max_shift)] = dot / n;
  }
  const auto best = std::max_element(score.begin(), score.end()) - score.begin();
  double shift = double(best - max_shift);
  if (best > 0 && best < std::ptrdiff_t(score.size()) - 1) {
    const double l = score[size_t(best - 1)], c = score[size_t(best)], r = score[size_t(best + 1)];
    const double den = l - 2.0 * c + r;
    if (den < 0) shift += 0.5 * (l - r) / den;
  }
  return shift;
}

}  // namespace sonargen
