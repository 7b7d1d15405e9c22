#ifndef SONARGEN_MISSION_HPP
#define SONARGEN_MISSION_HPP

#include "sonargen/errors.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sonargen {

/// Row-major so that one image row is one ping.
using Image = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using LabelGrid = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec2 = Eigen::Vector2d;

inline constexpr int kFormatVersion = 1;

enum class TerrainLabel : std::uint8_t { flat = 0, ripples = 1, rocks = 2, clutter = 3, nadir = 4 };
inline constexpr int kNumLabels = 5;

std::string to_string(TerrainLabel l);
TerrainLabel label_from_json(const nlohmann::json& j);

enum class Side { port, starboard };
std::string to_string(Side s);
Side side_from_string(const std::string& s);

struct Region {
  std::vector<Vec2> polygon;
  TerrainLabel label = TerrainLabel::flat;
};

struct WorldMap {
  double width_m = 0.0;
  double height_m = 0.0;
  std::vector<Region> regions;
  TerrainLabel background_label = TerrainLabel::flat;

  void validate() const;
  bool contains(const Vec2& p) const;
  /// Label at a point; later regions win, outside the map is background.
  TerrainLabel label_at(const Vec2& p) const;
};

struct MissionSpec {
  std::string map_id;
  std::vector<Vec2> waypoints;
  double speed_mps = 1.0;
  double ping_rate_hz = 16.0;
  int swath_px = 512;
  Side side = Side::starboard;
  double range_m = 32.0;   // ground range imaged per side
  int nadir_px = 16;       // blind stripe width at the inboard edge
  double turn_arc_m = 5.0; // heading blends linearly over this arc at corners

  void validate() const;
  double route_length() const;
};

void to_json(nlohmann::json& j, const WorldMap& m);
void from_json(const nlohmann::json& j, WorldMap& m);
void to_json(nlohmann::json& j, const MissionSpec& m);
void from_json(const nlohmann::json& j, MissionSpec& m);

/// Parses and validates, collecting field-level messages.
WorldMap parse_world_map(const nlohmann::json& j);
MissionSpec parse_mission(const nlohmann::json& j);

struct AttitudeSeries {
  std::vector<double> yaw_deg;  // wrapped to [-180, 180)
  std::size_t length() const { return yaw_deg.size(); }
};

struct PingPlan {
  std::vector<Vec2> positions;
  AttitudeSeries attitude;
  std::size_t size() const { return positions.size(); }
};

struct SemanticTile {
  LabelGrid labels;
  int tile_index = 0;
  int valid_rows = 0;

  int rows() const { return static_cast<int>(labels.rows()); }
  int cols() const { return static_cast<int>(labels.cols()); }
};

enum class Provenance { real, generated, oracle };
std::string to_string(Provenance p);

struct ScanTile {
  Image intensity;
  int tile_index = 0;
  int valid_rows = 0;
  Provenance provenance = Provenance::generated;

  int rows() const { return static_cast<int>(intensity.rows()); }
  int cols() const { return static_cast<int>(intensity.cols()); }
};

/// Wraps an angle in degrees to [-180, 180).
double wrap_degrees(double a);

/// Pings along the route at the mission's speed and rate, with heading
/// blended across corners.
PingPlan plan_pings(const MissionSpec& mission, const WorldMap& map);

/// Ping count the route produces: floor(length / speed * rate).
std::size_t ping_count(double route_length_m, double speed_mps, double ping_rate_hz);

struct SwathGeometry {
  Side side = Side::starboard;
  int swath_px = 512;
  double range_m = 32.0;
  int nadir_px = 16;

  static SwathGeometry of(const MissionSpec& m) { return {m.side, m.swath_px, m.range_m, m.nadir_px}; }
};

/// Label rows for pings [begin, end) of the plan.
LabelGrid rasterize_rows(const WorldMap& map, const PingPlan& plan, const SwathGeometry& swath, std::size_t begin,
                         std::size_t end);
inline LabelGrid rasterize_rows(const WorldMap& map, const PingPlan& plan, const SwathGeometry& swath) {
  return rasterize_rows(map, plan, swath, 0, plan.size());
}

/// Number of tiles needed for `rows` pings.
inline std::size_t tile_count(std::size_t rows, int tile_rows) {
  return (rows + std::size_t(tile_rows) - 1) / std::size_t(tile_rows);
}

/// Cuts rows into fixed-height tiles; the last one is padded with
/// `background` and records its valid row count.
std::vector<SemanticTile> slice_tiles(const LabelGrid& rows, int tile_rows, TerrainLabel background);

/// Inverse of slice_tiles (padding dropped).
LabelGrid concatenate_valid_rows(const std::vector<SemanticTile>& tiles);

/// Lazily rasterizes a mission one tile at a time.
class SemanticTileSource {
 public:
  SemanticTileSource(WorldMap map, PingPlan plan, SwathGeometry swath, int tile_rows);

  std::size_t tile_total() const { return tile_count(plan_.size(), tile_rows_); }
  std::size_t ping_total() const { return plan_.size(); }
  const PingPlan& plan() const { return plan_; }
  int tile_rows() const { return tile_rows_; }

  SemanticTile tile(std::size_t index) const;

 private:
  WorldMap map_;
  PingPlan plan_;
  SwathGeometry swath_;
  int tile_rows_;
};

}  // namespace sonargen

#endif  // SONARGEN_MISSION_HPP
