#ifndef SONARGEN_PROCEDURAL_HPP
#define SONARGEN_PROCEDURAL_HPP

#include "sonargen/conditioning.hpp"
#include "sonargen/mission.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sonargen {

/// Statistical seabed texture model. Lengths are pixels at the working
/// resolution; defaults are for 116-row desk tiles.
struct OracleParams {
  double flat_level = 0.22;
  double flat_variation = 0.12;      // relative low-frequency undulation
  double speckle = 0.30;             // multiplicative Rayleigh speckle strength
  double ripple_level = 0.33;
  double ripple_wavelength_px = 9.0; // along-track period
  double ripple_depth = 0.35;
  double ripple_slant = 0.03;        // phase drift per column, cycles
  double rock_level = 0.50;
  double rock_cell_px = 10.0;
  double rock_density = 0.55;        // probability that a cell holds a boulder
  double rock_radius_min_px = 1.5;
  double rock_radius_max_px = 3.5;
  double rock_highlight = 0.92;
  double rock_shadow_px = 6.0;
  double rock_shadow_level = 0.06;
  double clutter_level = 0.66;
  double clutter_depth = 0.30;
  double clutter_scale_px = 3.0;
  double nadir_level = 0.03;
  double gain_amplitude = 0.30;      // slow along-track gain 1 + a * n(row)
  double gain_correlation_rows = 160.0;
  double yaw_shear_gain = 6.0;       // px of lateral shift at normalized theta 1

  void validate() const;
  /// Rescales every pixel length by `factor` (4 takes the desk defaults to 464-row tiles).
  OracleParams scaled(double factor) const;
  static OracleParams for_tile_rows(int tile_rows) { return OracleParams{}.scaled(tile_rows / 116.0); }
};

void to_json(nlohmann::json& j, const OracleParams& p);
void from_json(const nlohmann::json& j, OracleParams& p);

/// Oracle render of one tile. Texture is a function of the global ping row
/// (tile_index * rows + r) and column, so consecutive tiles join seamlessly.
/// Rows with nonzero sign are shifted laterally by
/// sign * yaw_shear_gain * min(theta / theta_max, 1) pixels.
ScanTile synth_tile(const SemanticTile& map, const std::vector<double>& theta_rows, const std::vector<int>& sign_rows,
                    std::uint64_t seed, const OracleParams& params = {}, double theta_max = 450.0,
                    Side side = Side::starboard);

/// One paired training example.
struct CorpusExample {
  SemanticTile map;
  ScanTile image;
  std::vector<double> yaw_deg;  // per row; padded rows repeat the last yaw
  YawMetric yaw;
  Snippet snippet;
};

struct CorpusMeta {
  int format_version = kFormatVersion;
  int tile_rows = 116;
  int tile_cols = 128;
  std::uint64_t seed = 0;
  std::string source = "oracle";
  bool consecutive = true;  // example i-1 is the along-track predecessor of i
  OracleParams oracle;
  ConditioningConfig conditioning;
  Side side = Side::starboard;
};

void to_json(nlohmann::json& j, const CorpusMeta& m);
void from_json(const nlohmann::json& j, CorpusMeta& m);

struct Corpus {
  CorpusMeta meta;
  std::vector<CorpusExample> examples;

  std::size_t size() const { return examples.size(); }
};

struct CorpusOptions {
  int tile_rows = 116;
  OracleParams oracle;
  ConditioningConfig conditioning = ConditioningConfig::for_tile_rows(116);
};

/// Renders `n_tiles` consecutive oracle tiles along the route, with each
/// snippet taken from its true predecessor (zero for the first).
Corpus make_corpus(const WorldMap& world, const MissionSpec& route, int n_tiles, std::uint64_t seed,
                   const CorpusOptions& options = {});

/// Layout: meta.json, tiles/NNNNN/{map.png, image.png, att.json}.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

/// Thrown when a stored artifact carries an unsupported format_version.
class VersionError : public IoError {
 public:
  using IoError::IoError;
};

/// A seeded world with patches of every terrain type, plus a serpentine
/// survey route inside it whose corners turn both ways.
WorldMap demo_world(std::uint64_t seed, double width_m = 400.0, double height_m = 400.0);
MissionSpec demo_route(double length_m, int swath_px = 128, double leg_m = 40.0, double spacing_m = 12.0,
                       double extent_m = 400.0);

/// Lateral offset (pixels) that best aligns `image` to `reference`, from the
/// peak of the summed row cross-correlation with parabolic refinement.
/// Positive means `image` content sits to the right of `reference`.
double estimate_shift(const Image& image, const Image& reference, int max_shift);

}  // namespace sonargen

#endif  // SONARGEN_PROCEDURAL_HPP
