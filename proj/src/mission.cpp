#include "sonargen/mission.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sonargen {

namespace {

constexpr const char* kLabelNames[kNumLabels] = {"flat", "ripples", "rocks", "clutter", "nadir"};

double heading_deg(const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  return std::atan2(d.y(), d.x()) * 180.0 / std::numbers::pi;
}

// Even-odd rule.
bool inside_polygon(const std::vector<Vec2>& poly, const Vec2& p) {
  bool in = false;
  const size_t n = poly.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
      if (p.x() < x) in = !in;
    }
  }
  return in;
}

Vec2 point_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ValidationError("expected [x, y] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

void check_version(const nlohmann::json& j, std::vector<FieldError>& errors) {
  if (!j.contains("format_version")) return;
  if (!j["format_version"].is_number_integer() || j["format_version"].get<int>() != kFormatVersion)
    errors.push_back({"format_version", "unsupported version (expected " + std::to_string(kFormatVersion) + ")"});
}

}  // namespace

std::string to_string(TerrainLabel l) { return kLabelNames[static_cast<int>(l)]; }

TerrainLabel label_from_json(const nlohmann::json& j) {
  if (j.is_number_integer()) {
    const int v = j.get<int>();
    if (v < 0 || v >= kNumLabels) throw ValidationError("label code out of range: " + std::to_string(v));
    return static_cast<TerrainLabel>(v);
  }
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    for (int i = 0; i < kNumLabels; ++i)
      if (s == kLabelNames[i]) return static_cast<TerrainLabel>(i);
    throw ValidationError("unknown terrain label: " + s);
  }
  throw ValidationError("label must be a name or integer code");
}

std::string to_string(Side s) { return s == Side::port ? "port" : "starboard"; }

Side side_from_string(const std::string& s) {
  if (s == "port") return Side::port;
  if (s == "starboard") return Side::starboard;
  throw ValidationError("side must be port or starboard");
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::real: return "real";
    case Provenance::oracle: return "oracle";
    default: return "generated";
  }
}

double wrap_degrees(double a) {
  double r = std::fmod(a + 180.0, 360.0);
  if (r < 0) r += 360.0;
  return r - 180.0;
}

// --- WorldMap ---------------------------------------------------------------

void WorldMap::validate() const {
  std::vector<FieldError> errors;
  if (!(width_m > 0)) errors.push_back({"width_m", "must be positive"});
  if (!(height_m > 0)) errors.push_back({"height_m", "must be positive"});
  if (background_label == TerrainLabel::nadir) errors.push_back({"background_label", "nadir is reserved"});
  for (size_t i = 0; i < regions.size(); ++i) {
    const auto& r = regions[i];
    const std::string f = "regions[" + std::to_string(i) + "]";
    if (r.polygon.size() < 3) errors.push_back({f + ".polygon", "needs at least 3 vertices"});
    for (const auto& p : r.polygon)
      if (p.x() < 0 || p.y() < 0 || p.x() > width_m || p.y() > height_m) {
        errors.push_back({f + ".polygon", "vertex outside map bounds"});
        break;
      }
    if (r.label == TerrainLabel::nadir) errors.push_back({f + ".label", "nadir is reserved"});
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
}

bool WorldMap::contains(const Vec2& p) const {
  return p.x() >= 0 && p.y() >= 0 && p.x() <= width_m && p.y() <= height_m;
}

TerrainLabel WorldMap::label_at(const Vec2& p) const {
  if (!contains(p)) return background_label;
  for (auto it = regions.rbegin(); it != regions.rend(); ++it)
    if (inside_polygon(it->polygon, p)) return it->label;
  return background_label;
}

void to_json(nlohmann::json& j, const WorldMap& m) {
  nlohmann::json regions = nlohmann::json::array();
  for (const auto& r : m.regions) {
    nlohmann::json poly = nlohmann::json::array();
    for (const auto& p : r.polygon) poly.push_back({p.x(), p.y()});
    regions.push_back({{"polygon", poly}, {"label", to_string(r.label)}});
  }
  j = {{"format_version", kFormatVersion},
       {"width_m", m.width_m},
       {"height_m", m.height_m},
       {"background_label", to_string(m.background_label)},
       {"regions", regions}};
}

void from_json(const nlohmann::json& j, WorldMap& m) { m = parse_world_map(j); }

WorldMap parse_world_map(const nlohmann::json& j) {
  std::vector<FieldError> errors;
  if (!j.is_object()) throw ValidationError(std::vector<FieldError>{{"", "expected a JSON object"}});
  check_version(j, errors);
  WorldMap m;
  auto number = [&](const char* key, double& out) {
    if (!j.contains(key) || !j[key].is_number())
      errors.push_back({key, "required number"});
    else
      out = j[key].get<double>();
  };
  number("width_m", m.width_m);
  number("height_m", m.height_m);
  if (j.contains("background_label")) {
    try {
      m.background_label = label_from_json(j["background_label"]);
    } catch (const ValidationError& e) {
      errors.push_back({"background_label", e.what()});
    }
  }
  if (j.contains("regions")) {
    if (!j["regions"].is_array()) {
      errors.push_back({"regions", "must be an array"});
    } else {
      for (size_t i = 0; i < j["regions"].size(); ++i) {
        const auto& r = j["regions"][i];
        const std::string f = "regions[" + std::to_string(i) + "]";
        Region region;
        try {
          for (const auto& p : r.at("polygon")) region.polygon.push_back(point_from_json(p));
        } catch (const std::exception& e) {
          errors.push_back({f + ".polygon", e.what()});
        }
        try {
          region.label = label_from_json(r.at("label"));
        } catch (const std::exception& e) {
          errors.push_back({f + ".label", e.what()});
        }
        m.regions.push_back(std::move(region));
      }
    }
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
  m.validate();
  return m;
}

// --- MissionSpec ------------------------------------------------------------

double MissionSpec::route_length() const {
  double len = 0.0;
  for (size_t i = 1; i < waypoints.size(); ++i) len += (waypoints[i] - waypoints[i - 1]).norm();
  return len;
}

void MissionSpec::validate() const {
  std::vector<FieldError> errors;
  if (waypoints.size() < 2) errors.push_back({"waypoints", "at least 2 waypoints required"});
  if (!(speed_mps > 0)) errors.push_back({"speed_mps", "must be positive"});
  if (!(ping_rate_hz > 0)) errors.push_back({"ping_rate_hz", "must be positive"});
  if (swath_px <= 0 || swath_px % 4 != 0) errors.push_back({"swath_px", "must be a positive multiple of 4"});
  if (!(range_m > 0)) errors.push_back({"range_m", "must be positive"});
  if (nadir_px < 0 || nadir_px >= swath_px) errors.push_back({"nadir_px", "must lie in [0, swath_px)"});
  if (turn_arc_m < 0) errors.push_back({"turn_arc_m", "must be non-negative"});
  if (errors.empty() && !(route_length() > 0)) errors.push_back({"waypoints", "route has zero length"});
  if (!errors.empty()) throw ValidationError(std::move(errors));
}

void to_json(nlohmann::json& j, const MissionSpec& m) {
  nlohmann::json wps = nlohmann::json::array();
  for (const auto& p : m.waypoints) wps.push_back({p.x(), p.y()});
  j = {{"format_version", kFormatVersion},
       {"map_id", m.map_id},
       {"waypoints", wps},
       {"speed_mps", m.speed_mps},
       {"ping_rate_hz", m.ping_rate_hz},
       {"swath_px", m.swath_px},
       {"side", to_string(m.side)},
       {"range_m", m.range_m},
       {"nadir_px", m.nadir_px},
       {"turn_arc_m", m.turn_arc_m}};
}

void from_json(const nlohmann::json& j, MissionSpec& m) { m = parse_mission(j); }

MissionSpec parse_mission(const nlohmann::json& j) {
  std::vector<FieldError> errors;
  if (!j.is_object()) throw ValidationError(std::vector<FieldError>{{"", "expected a JSON object"}});
  check_version(j, errors);
  MissionSpec m;
  if (j.contains("map_id")) {
    if (j["map_id"].is_string())
      m.map_id = j["map_id"].get<std::string>();
    else
      errors.push_back({"map_id", "must be a string"});
  }
  if (!j.contains("waypoints") || !j["waypoints"].is_array()) {
    errors.push_back({"waypoints", "required array of [x, y]"});
  } else {
    for (size_t i = 0; i < j["waypoints"].size(); ++i) {
      try {
        m.waypoints.push_back(point_from_json(j["waypoints"][i]));
      } catch (const ValidationError& e) {
        errors.push_back({"waypoints[" + std::to_string(i) + "]", e.what()});
      }
    }
  }
  auto number = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number())
      errors.push_back({key, "must be a number"});
    else
      out = j[key].get<double>();
  };
  auto integer = [&](const char* key, int& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer())
      errors.push_back({key, "must be an integer"});
    else
      out = j[key].get<int>();
  };
  number("speed_mps", m.speed_mps);
  number("ping_rate_hz", m.ping_rate_hz);
  integer("swath_px", m.swath_px);
  number("range_m", m.range_m);
  integer("nadir_px", m.nadir_px);
  number("turn_arc_m", m.turn_arc_m);
  if (j.contains("side")) {
    try {
      m.side = side_from_string(j["side"].get<std::string>());
    } catch (const std::exception&) {
      errors.push_back({"side", "must be port or starboard"});
    }
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
  m.validate();
  return m;
}

// --- Ping planning ----------------------------------------------------------

std::size_t ping_count(double route_length_m, double speed_mps, double ping_rate_hz) {
  const double n = route_length_m / speed_mps * ping_rate_hz;
  return static_cast<std::size_t>(std::floor(n + 1e-9));
}

PingPlan plan_pings(const MissionSpec& mission, const WorldMap& map) {
  mission.validate();
  for (size_t i = 0; i < mission.waypoints.size(); ++i)
    if (!map.contains(mission.waypoints[i]))
      throw BoundsError(std::vector<FieldError>{{"waypoints[" + std::to_string(i) + "]", "outside map bounds"}});

  // Drop zero-length segments.
  std::vector<Vec2> pts{mission.waypoints.front()};
  for (size_t i = 1; i < mission.waypoints.size(); ++i)
    if ((mission.waypoints[i] - pts.back()).norm() > 1e-12) pts.push_back(mission.waypoints[i]);

  const size_t n_seg = pts.size() - 1;
  std::vector<double> seg_len(n_seg), seg_start(n_seg), heading(n_seg);
  double total = 0.0;
  for (size_t k = 0; k < n_seg; ++k) {
    seg_len[k] = (pts[k + 1] - pts[k]).norm();
    seg_start[k] = total;
    heading[k] = heading_deg(pts[k], pts[k + 1]);
    total += seg_len[k];
  }
  // Half arc at each interior vertex k (between segment k-1 and k).
  std::vector<double> half_arc(n_seg, 0.0);
  for (size_t k = 1; k < n_seg; ++k)
    half_arc[k] = std::min({mission.turn_arc_m / 2.0, seg_len[k - 1] / 2.0, seg_len[k] / 2.0});

  const size_t n = ping_count(total, mission.speed_mps, mission.ping_rate_hz);
  PingPlan plan;
  plan.positions.reserve(n);
  plan.attitude.yaw_deg.reserve(n);
  const double step = mission.speed_mps / mission.ping_rate_hz;
  size_t k = 0;
  for (size_t i = 0; i < n; ++i) {
    const double s = double(i) * step;
    while (k + 1 < n_seg && s >= seg_start[k + 1]) ++k;
    const double t = std::clamp((s - seg_start[k]) / seg_len[k], 0.0, 1.0);
    plan.positions.push_back(pts[k] + t * (pts[k + 1] - pts[k]));

    double yaw = heading[k];
    if (k + 1 < n_seg && half_arc[k + 1] > 0 && s > seg_start[k + 1] - half_arc[k + 1]) {
      const double h = half_arc[k + 1];
      const double f = (s - (seg_start[k + 1] - h)) / (2 * h);
      yaw = heading[k] + f * wrap_degrees(heading[k + 1] - heading[k]);
    } else if (k > 0 && half_arc[k] > 0 && s < seg_start[k] + half_arc[k]) {
      const double h = half_arc[k];
      const double f = (s - (seg_start[k] - h)) / (2 * h);
      yaw = heading[k - 1] + f * wrap_degrees(heading[k] - heading[k - 1]);
    }
    plan.attitude.yaw_deg.push_back(wrap_degrees(yaw));
  }
  return plan;
}

// --- Rasterization ----------------------------------------------------------

LabelGrid rasterize_rows(const WorldMap& map, const PingPlan& plan, const SwathGeometry& swath, std::size_t begin,
                         std::size_t end) {
  if (plan.positions.size() != plan.attitude.length()) throw ValidationError("positions/attitude length mismatch");
  end = std::min(end, plan.size());
  const int w = swath.swath_px;
  LabelGrid rows(Eigen::Index(end > begin ? end - begin : 0), w);
  const double px = swath.range_m / double(w);
  for (std::size_t i = begin; i < end; ++i) {
    const double psi = plan.attitude.yaw_deg[i] * std::numbers::pi / 180.0;
    // Starboard looks to the right of the heading, port to the left.
    const Vec2 dir = swath.side == Side::starboard ? Vec2(std::sin(psi), -std::cos(psi))
                                                   : Vec2(-std::sin(psi), std::cos(psi));
    for (int j = 0; j < w; ++j) {
      const int range_px = swath.side == Side::starboard ? j : w - 1 - j;
      TerrainLabel l = TerrainLabel::nadir;
      if (range_px >= swath.nadir_px) l = map.label_at(plan.positions[i] + dir * ((range_px + 0.5) * px));
      rows(Eigen::Index(i - begin), j) = static_cast<std::uint8_t>(l);
    }
  }
  return rows;
}

std::vector<SemanticTile> slice_tiles(const LabelGrid& rows, int tile_rows, TerrainLabel background) {
  if (rows.rows() == 0) throw ValidationError("slice_tiles: no rows");
  if (tile_rows <= 0) throw ValidationError("slice_tiles: tile_rows must be positive");
  const std::size_t n = tile_count(std::size_t(rows.rows()), tile_rows);
  std::vector<SemanticTile> tiles;
  tiles.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Eigen::Index r0 = Eigen::Index(t) * tile_rows;
    const Eigen::Index valid = std::min<Eigen::Index>(tile_rows, rows.rows() - r0);
    SemanticTile tile;
    tile.tile_index = static_cast<int>(t);
    tile.valid_rows = static_cast<int>(valid);
    tile.labels = LabelGrid::Constant(tile_rows, rows.cols(), static_cast<std::uint8_t>(background));
    tile.labels.topRows(valid) = rows.middleRows(r0, valid);
    tiles.push_back(std::move(tile));
  }
  return tiles;
}

LabelGrid concatenate_valid_rows(const std::vector<SemanticTile>& tiles) {
  Eigen::Index total = 0;
  for (const auto& t : tiles) total += t.valid_rows;
  LabelGrid out(total, tiles.empty() ? 0 : tiles.front().cols());
  Eigen::Index r = 0;
  for (const auto& t : tiles) {
    out.middleRows(r, t.valid_rows) = t.labels.topRows(t.valid_rows);
    r += t.valid_rows;
  }
  return out;
}

SemanticTileSource::SemanticTileSource(WorldMap map, PingPlan plan, SwathGeometry swath, int tile_rows)
    : map_(std::move(map)), plan_(std::move(plan)), swath_(swath), tile_rows_(tile_rows) {
  if (plan_.size() == 0) throw ValidationError("mission produces no pings");
  if (tile_rows_ <= 0) throw ValidationError("tile_rows must be positive");
}

SemanticTile SemanticTileSource::tile(std::size_t index) const {
  if (index >= tile_total()) throw ValidationError("tile index out of range");
  const std::size_t begin = index * std::size_t(tile_rows_);
  const std::size_t end = std::min(plan_.size(), begin + std::size_t(tile_rows_));
  SemanticTile t;
  t.tile_index = static_cast<int>(index);
  t.valid_rows = static_cast<int>(end - begin);
  t.labels = LabelGrid::Constant(tile_rows_, swath_.swath_px, static_cast<std::uint8_t>(map_.background_label));
  t.labels.topRows(t.valid_rows) = rasterize_rows(map_, plan_, swath_, begin, end);
  return t;
}

}  // namespace sonargen
