#include "sonargen/sequence.hpp"

#include "sonargen/image_io.hpp"
#include "sonargen/util.hpp"

#include <cmath>
#include <cstdio>

namespace sonargen {

std::string to_string(GenerationMode m) {
  switch (m) {
    case GenerationMode::independent: return "independent";
    case GenerationMode::sigmoid_blended: return "sigmoid_blended";
    default: return "markov";
  }
}

GenerationMode mode_from_string(const std::string& s) {
  if (s == "markov") return GenerationMode::markov;
  if (s == "independent") return GenerationMode::independent;
  if (s == "sigmoid_blended" || s == "sigmoid") return GenerationMode::sigmoid_blended;
  throw ValidationError(std::vector<FieldError>{{"mode", "must be markov, independent or sigmoid_blended"}});
}

void blend_seams(Image& upper, Image& lower, int window, double steepness) {
  const int H = int(upper.rows());
  if (lower.rows() != H || lower.cols() != upper.cols()) throw ValidationError("blend_seams: tile shape mismatch");
  if (window <= 0 || window > H / 2) throw ValidationError("blend_seams: window must lie in [1, tile_rows/2]");
  if (!(steepness > 0)) throw ValidationError("blend_seams: steepness must be positive");
  const Image a = upper.bottomRows(window);
  const Image b = lower.topRows(window);
  // d = r - seam over [-W, W); each tile is mirrored about the seam to cover
  // the other half of the window.
  for (int d = -window; d < window; ++d) {
    const double w = 1.0 / (1.0 + std::exp(-steepness * d / window));
    const auto above = d < 0 ? a.row(window + d) : a.row(window - 1 - d);
    const auto below = d < 0 ? b.row(-d - 1) : b.row(d);
    const Eigen::RowVectorXf v = (float(w) * below + float(1.0 - w) * above);
    if (d < 0)
      upper.row(H + d) = v;
    else
      lower.row(d) = v;
  }
}

// --- Stream -----------------------------------------------------------------

MissionStream::MissionStream(std::shared_ptr<gan::Model> model, TileProvider tiles, std::size_t tile_total,
                             YawMetric yaw, GenerationOptions options)
    : model_(std::move(model)), tiles_(std::move(tiles)), total_(tile_total), yaw_(std::move(yaw)), opt_(options) {
  if (!model_) throw ValidationError("generation needs a model");
  if (total_ == 0) throw ValidationError("mission has no tiles");
  if (opt_.blend_window_rows == 0) opt_.blend_window_rows = model_->conditioning.snippet_rows;
  if (opt_.mode == GenerationMode::sigmoid_blended &&
      (opt_.blend_window_rows < 1 || opt_.blend_window_rows > model_->tile_rows / 2 || !(opt_.blend_steepness > 0)))
    throw ValidationError(std::vector<FieldError>{{"blend_window_rows", "must lie in [1, tile_rows/2]"}});
}

ScanTile MissionStream::generate_tile(std::size_t t, const Snippet& snippet) {
  const SemanticTile x = tiles_(t);
  if (x.rows() != model_->tile_rows || x.cols() != model_->tile_cols)
    throw ValidationError("semantic tile " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                          " does not match the checkpoint's " + std::to_string(model_->tile_rows) + "x" +
                          std::to_string(model_->tile_cols));
  const YawMetric rows = yaw_rows(yaw_, t * std::size_t(x.rows()), x.rows());
  const auto block = make_conditioning(snippet, rows, x.rows(), x.cols(), model_->conditioning.theta_max());
  const auto input = assemble_generator_input(x, block);
  ScanTile out;
  out.intensity = gan::run_generator(*model_->generator, input, opt_.noise, derive_seed(opt_.seed, t));
  quantize16(out.intensity);
  out.tile_index = int(t);
  out.valid_rows = x.valid_rows;
  out.provenance = Provenance::generated;
  return out;
}

void MissionStream::seek(std::size_t index, std::optional<ScanTile> previous) {
  if (index > total_) throw ValidationError("seek past the end of the mission");
  cursor_ = emitted_ = index;
  previous_ = std::move(previous);
  pending_.reset();
}

std::optional<ScanTile> MissionStream::next() {
  const int S = model_->conditioning.snippet_rows;
  const int W = model_->tile_cols;
  while (cursor_ < total_) {
    const std::size_t t = cursor_++;
    Snippet snippet = opt_.mode == GenerationMode::markov ? extract_snippet(previous_ ? &*previous_ : nullptr, S, W)
                                                          : extract_snippet(nullptr, S, W);
    ScanTile current = generate_tile(t, snippet);
    note_resident(1 + int(previous_.has_value()) + int(pending_.has_value()));
    switch (opt_.mode) {
      case GenerationMode::markov:
        previous_ = current;
        ++emitted_;
        return current;
      case GenerationMode::independent:
        ++emitted_;
        return current;
      case GenerationMode::sigmoid_blended:
        if (!pending_) {
          pending_ = std::move(current);
          continue;
        }
        blend_seams(pending_->intensity, current.intensity, opt_.blend_window_rows, opt_.blend_steepness);
        std::optional<ScanTile> out = std::move(pending_);
        pending_ = std::move(current);
        ++emitted_;
        return out;
    }
  }
  if (pending_) {
    std::optional<ScanTile> out = std::move(pending_);
    pending_.reset();
    ++emitted_;
    return out;
  }
  return std::nullopt;
}

// --- Scans ------------------------------------------------------------------

std::vector<std::size_t> MissionScan::seam_rows() const {
  std::vector<std::size_t> out;
  for (std::size_t t = 1; t < tiles.size(); ++t) out.push_back(t * std::size_t(tile_rows));
  return out;
}

MissionScan collect(MissionStream& stream, const TileProvider& tiles, std::size_t total_pings,
                    const GenerationOptions& options, bool keep_maps) {
  MissionScan scan;
  scan.mode = options.mode;
  scan.seed = options.seed;
  scan.total_pings = total_pings;
  while (auto t = stream.next()) {
    if (keep_maps) scan.maps.push_back(tiles(std::size_t(t->tile_index)));
    scan.tile_rows = t->rows();
    scan.tiles.push_back(std::move(*t));
  }
  return scan;
}

Image stitch(const MissionScan& scan, std::size_t begin, std::size_t end) {
  std::size_t total = 0;
  for (const auto& t : scan.tiles) total += std::size_t(t.valid_rows);
  if (begin > end || end > total)
    throw ValidationError("stitch: row range [" + std::to_string(begin) + ", " + std::to_string(end) +
                          ") outside the " + std::to_string(total) + "-row scan");
  const int W = scan.tiles.empty() ? 0 : scan.tiles.front().cols();
  Image out(Eigen::Index(end - begin), W);
  std::size_t row = 0, filled = 0;
  for (const auto& t : scan.tiles) {
    const std::size_t v = std::size_t(t.valid_rows);
    const std::size_t lo = std::max(begin, row), hi = std::min(end, row + v);
    if (lo < hi) {
      out.middleRows(Eigen::Index(filled), Eigen::Index(hi - lo)) =
          t.intensity.middleRows(Eigen::Index(lo - row), Eigen::Index(hi - lo));
      filled += hi - lo;
    }
    row += v;
    if (row >= end) break;
  }
  return out;
}

std::string tile_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "tile_%05zu.png", index);
  return buf;
}

std::string map_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "map_%05zu.png", index);
  return buf;
}

ScanWriter::ScanWriter(std::filesystem::path dir, nlohmann::json manifest, std::size_t tile_total)
    : dir_(std::move(dir)), manifest_(std::move(manifest)) {
  std::filesystem::create_directories(dir_);
  manifest_["format_version"] = kFormatVersion;
  manifest_["tiles_total"] = tile_total;
  manifest_["tiles"] = nlohmann::json::array();
  commit();
}

void ScanWriter::write(const ScanTile& tile, const SemanticTile* map) {
  const std::size_t i = std::size_t(tile.tile_index);
  write_png16(dir_ / tile_file_name(i), tile.intensity);
  if (map) write_png8(dir_ / map_file_name(i), map->labels);
  manifest_["tiles"].push_back({{"index", i},
                                {"file", tile_file_name(i)},
                                {"valid_rows", tile.valid_rows},
                                {"map", map ? nlohmann::json(map_file_name(i)) : nlohmann::json()}});
  ++written_;
  commit();
}

void ScanWriter::commit() {
  manifest_["tiles_written"] = written_;
  write_file_atomic(dir_ / "manifest.json", manifest_.dump(2));
}

MissionRun generate_mission(const WorldMap& map, const MissionSpec& mission, const gan::Checkpoint& checkpoint,
                            const GenerationOptions& options, const std::filesystem::path& dir,
                            const ProgressFn& progress, const nlohmann::json& extra_manifest) {
  const auto& model = checkpoint.model;
  if (!model) throw ValidationError("checkpoint has no model");
  if (mission.swath_px != model->tile_cols)
    throw ValidationError(std::vector<FieldError>{
        {"swath_px", "mission swath " + std::to_string(mission.swath_px) + " px does not match the checkpoint's " +
                         std::to_string(model->tile_cols) + " px tiles"}});
  PingPlan plan = plan_pings(mission, map);
  const YawMetric yaw = yaw_metric_series(plan.attitude, model->conditioning.lookahead);
  const std::size_t pings = plan.size();
  SemanticTileSource source(map, std::move(plan), SwathGeometry::of(mission), model->tile_rows);
  const std::size_t total = source.tile_total();
  // the writer wants the label tile the stream just used; keep the last one
  std::optional<SemanticTile> last;
  TileProvider tiles = [&source, &last](std::size_t t) {
    if (!last || std::size_t(last->tile_index) != t) last = source.tile(t);
    return *last;
  };
  MissionStream stream(model, tiles, total, yaw, options);

  nlohmann::json manifest = extra_manifest.is_object() ? extra_manifest : nlohmann::json::object();
  manifest["mode"] = to_string(options.mode);
  manifest["seed"] = options.seed;
  manifest["noise"] = options.noise;
  manifest["checkpoint_id"] = checkpoint.id;
  manifest["tile_rows"] = model->tile_rows;
  manifest["tile_cols"] = model->tile_cols;
  manifest["total_pings"] = pings;
  std::vector<std::size_t> seams;
  for (std::size_t t = 1; t < total; ++t) seams.push_back(t * std::size_t(model->tile_rows));
  manifest["seam_rows"] = seams;
  if (options.mode == GenerationMode::sigmoid_blended) {
    manifest["blend_window_rows"] =
        options.blend_window_rows ? options.blend_window_rows : model->conditioning.snippet_rows;
    manifest["blend_steepness"] = options.blend_steepness;
  }

  ScanWriter writer(dir, manifest, total);
  if (progress) progress(0, total);
  while (auto tile = stream.next()) {
    const SemanticTile map_tile = tiles(std::size_t(tile->tile_index));
    writer.write(*tile, &map_tile);
    if (progress) progress(writer.written(), total);
  }
  return {writer.written(), pings};
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json")) throw IoError("scan has no manifest.json: " + dir.string());
  auto j = nlohmann::json::parse(read_file(dir / "manifest.json"), nullptr, false);
  if (j.is_discarded()) throw IoError("scan manifest.json is malformed");
  if (j.value("format_version", -1) != kFormatVersion) throw IoError("scan manifest format_version unsupported");
  return j;
}

MissionScan load_scan(const std::filesystem::path& dir) {
  const auto m = read_manifest(dir);
  MissionScan scan;
  try {
    scan.mode = mode_from_string(m.value("mode", std::string("markov")));
    scan.seed = m.value("seed", std::uint64_t{0});
    scan.checkpoint_id = m.value("checkpoint_id", std::string());
    scan.tile_rows = m.value("tile_rows", 0);
    bool maps = true;
    for (const auto& e : m.at("tiles")) {
      ScanTile t;
      t.intensity = read_png16(dir / e.at("file").get<std::string>());
      t.tile_index = e.at("index").get<int>();
      t.valid_rows = e.at("valid_rows").get<int>();
      if (scan.tile_rows == 0) scan.tile_rows = t.rows();
      scan.total_pings += std::size_t(t.valid_rows);
      maps = maps && e.contains("map") && e["map"].is_string();
      if (maps) {
        SemanticTile s;
        s.labels = read_png8(dir / e["map"].get<std::string>());
        s.tile_index = t.tile_index;
        s.valid_rows = t.valid_rows;
        scan.maps.push_back(std::move(s));
      }
      scan.tiles.push_back(std::move(t));
    }
    if (!maps) scan.maps.clear();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("scan manifest.json: ") + e.what());
  }
  return scan;
}

}  // namespace sonargen
