#ifndef SONARGEN_SEQUENCE_HPP
#define SONARGEN_SEQUENCE_HPP

#include "sonargen/conditioning.hpp"
#include "sonargen/gan/trainer.hpp"
#include "sonargen/mission.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sonargen {

enum class GenerationMode { markov, independent, sigmoid_blended };

std::string to_string(GenerationMode m);
/// Accepts "markov", "independent", "sigmoid_blended" and "sigmoid".
GenerationMode mode_from_string(const std::string& s);

struct GenerationOptions {
  GenerationMode mode = GenerationMode::markov;
  std::uint64_t seed = 0;
  bool noise = true;        // dropout at test time, drawn per tile from the seed
  int blend_window_rows = 0;  // 0 picks the snippet height
  double blend_steepness = 8.0;
};

/// Sigmoid cross-fade over the 2W rows around the seam between a tile and its
/// successor, w(r) = 1 / (1 + exp(-k (r - seam) / W)). Each tile is extended
/// across the seam by reflection. Rows outside the window are untouched.
void blend_seams(Image& upper, Image& lower, int window, double steepness);

/// Semantic tile t of a mission.
using TileProvider = std::function<SemanticTile(std::size_t)>;

/// Lazily chains generated tiles along a mission.
class MissionStream {
 public:
  MissionStream(std::shared_ptr<gan::Model> model, TileProvider tiles, std::size_t tile_total, YawMetric yaw,
                GenerationOptions options);

  /// Next finished tile in ping order; empty when the mission is done.
  std::optional<ScanTile> next();

  /// Resumes a Markov chain at tile `index` with `previous` as its predecessor.
  void seek(std::size_t index, std::optional<ScanTile> previous);

  std::size_t tile_total() const { return total_; }
  std::size_t produced() const { return emitted_; }
  /// Largest number of tiles held at once, counting the one being handed out.
  int resident_high_water() const { return high_water_; }

  /// Raw generator output for tile t with an explicit snippet.
  ScanTile generate_tile(std::size_t t, const Snippet& snippet);

 private:
  void note_resident(int n) { high_water_ = std::max(high_water_, n); }

  std::shared_ptr<gan::Model> model_;
  TileProvider tiles_;
  std::size_t total_;
  YawMetric yaw_;
  GenerationOptions opt_;
  std::size_t cursor_ = 0;   // next tile to generate
  std::size_t emitted_ = 0;
  std::optional<ScanTile> previous_;  // raw predecessor, Markov snippet source
  std::optional<ScanTile> pending_;   // held back for blending with its successor
  int high_water_ = 0;
};

/// In-memory mission scan.
struct MissionScan {
  GenerationMode mode = GenerationMode::markov;
  std::uint64_t seed = 0;
  std::size_t total_pings = 0;
  int tile_rows = 0;
  std::string checkpoint_id;
  std::vector<ScanTile> tiles;
  std::vector<SemanticTile> maps;  // optional, for evaluation

  /// Rows at which tile t+1 begins, t = 0 .. n-2.
  std::vector<std::size_t> seam_rows() const;
};

/// Drains a stream into memory. `maps` keeps the semantic tiles alongside.
MissionScan collect(MissionStream& stream, const TileProvider& tiles, std::size_t total_pings,
                    const GenerationOptions& options, bool keep_maps = false);

/// Rows [begin, end) of the waterfall, padding rows excluded.
Image stitch(const MissionScan& scan, std::size_t begin, std::size_t end);
inline Image stitch(const MissionScan& scan) { return stitch(scan, 0, scan.total_pings); }

/// Directory of numbered 16-bit PNG tiles plus manifest.json.
class ScanWriter {
 public:
  ScanWriter(std::filesystem::path dir, nlohmann::json manifest, std::size_t tile_total);
  /// Writes the tile image (and its label map when given), then commits the
  /// manifest count.
  void write(const ScanTile& tile, const SemanticTile* map = nullptr);
  std::size_t written() const { return written_; }

 private:
  void commit();
  std::filesystem::path dir_;
  nlohmann::json manifest_;
  std::size_t written_ = 0;
};

std::string tile_file_name(std::size_t index);
std::string map_file_name(std::size_t index);

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

struct MissionRun {
  std::size_t tiles = 0;
  std::size_t pings = 0;
};

/// Plans, rasterizes and generates a whole mission into `dir`, streaming one
/// tile at a time. Shape checks against the checkpoint happen before any
/// tile is written.
MissionRun generate_mission(const WorldMap& map, const MissionSpec& mission, const gan::Checkpoint& checkpoint,
                            const GenerationOptions& options, const std::filesystem::path& dir,
                            const ProgressFn& progress = {}, const nlohmann::json& extra_manifest = {});

/// Loads a scan directory written by ScanWriter. Maps are read when present.
MissionScan load_scan(const std::filesystem::path& dir);
nlohmann::json read_manifest(const std::filesystem::path& dir);

}  // namespace sonargen

#endif  // SONARGEN_SEQUENCE_HPP
