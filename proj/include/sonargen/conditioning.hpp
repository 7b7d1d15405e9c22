#ifndef SONARGEN_CONDITIONING_HPP
#define SONARGEN_CONDITIONING_HPP

#include "sonargen/mission.hpp"
#include "sonargen/nn/tensor.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <vector>

namespace sonargen {

/// Constants of the condition block. Recorded in checkpoints.
struct ConditioningConfig {
  int snippet_rows = 32;
  int lookahead = 50;
  /// Heading change over the lookahead that saturates the yaw channels.
  /// The turn metric itself saturates at 5 * max_turn_deg.
  double max_turn_deg = 90.0;

  double theta_max() const { return 5.0 * max_turn_deg; }

  /// Snippet height scaled from 32 rows at the 464-row reference tile.
  static ConditioningConfig for_tile_rows(int tile_rows);
};

void to_json(nlohmann::json& j, const ConditioningConfig& c);
void from_json(const nlohmann::json& j, ConditioningConfig& c);

struct YawSample {
  double theta = 5.0;
  int sign = 0;
};

/// Turn metric at ping t: theta = 5 * max(1, |psi_t - psi_{t+L}|) using the
/// shortest signed angle; sign = sign(psi_t - psi_{t+L}). The lookahead is
/// clamped to the last ping.
YawSample yaw_metric(const AttitudeSeries& attitude, std::size_t t, int lookahead = 50);

/// Per-ping theta and sign rows.
struct YawMetric {
  std::vector<double> theta;
  std::vector<int> sign;
};

YawMetric yaw_metric_series(const AttitudeSeries& attitude, int lookahead = 50);

/// Rows [begin, begin + rows) of a series; rows past the end are padded as
/// straight travel (theta 5, sign 0).
YawMetric yaw_rows(const YawMetric& series, std::size_t begin, int rows);

/// Splits theta by turn direction into two H x W channels holding
/// min(theta / theta_max, 1), broadcast across each row.
std::pair<Image, Image> yaw_channels(const std::vector<double>& theta_rows, const std::vector<int>& sign_rows, int H,
                                     int W, double theta_max);

struct Snippet {
  Image rows;
  std::optional<int> source_tile_index;  // none on cold start
};

/// Bottom S valid rows of the previous tile; all-zero when there is none.
/// A predecessor with fewer than S valid rows is zero-padded above.
Snippet extract_snippet(const ScanTile* prev, int snippet_rows, int width);

struct ConditioningBlock {
  Snippet snippet;
  Image yaw_cw;
  Image yaw_ccw;
};

ConditioningBlock make_conditioning(const Snippet& snippet, const YawMetric& rows, int H, int W, double theta_max);

/// Semantic map normalized by label_code / (num_labels - 1).
Image normalize_labels(const LabelGrid& labels);

/// H x W array with the snippet in its top rows and zeros below.
Image pad_snippet(const Snippet& snippet, int H);

enum GeneratorChannel : int { kMapChannel = 0, kYawCwChannel = 1, kYawCcwChannel = 2, kSnippetChannel = 3 };
enum DiscriminatorChannel : int { kDiscMapChannel = 0, kDiscSnippetChannel = 1, kDiscImageChannel = 2 };

/// [semantic_map, yaw_cw, yaw_ccw, snippet_padded]
struct GeneratorInput {
  static constexpr int kChannels = 4;
  nn::FeatureMap<float> channels;

  Image channel(int c) const;
};

/// [semantic_map, snippet_padded, image]; the yaw condition is withheld.
struct DiscriminatorInput {
  static constexpr int kChannels = 3;
  nn::FeatureMap<float> channels;

  DiscriminatorInput() = default;
  /// Rejects anything that is not exactly three channels.
  explicit DiscriminatorInput(nn::FeatureMap<float> stack);

  Image channel(int c) const;
};

GeneratorInput assemble_generator_input(const SemanticTile& x, const ConditioningBlock& c);
DiscriminatorInput assemble_discriminator_input(const SemanticTile& x, const Snippet& snippet, const Image& image);

/// Copies an H x W image into channel `c` of a feature map.
void set_channel(nn::FeatureMap<float>& map, int c, const Image& image);
Image get_channel(const nn::FeatureMap<float>& map, int c);

}  // namespace sonargen

#endif  // SONARGEN_CONDITIONING_HPP
