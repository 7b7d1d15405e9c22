#ifndef SONARGEN_EVALUATION_HPP
#define SONARGEN_EVALUATION_HPP

#include "sonargen/gan/trainer.hpp"
#include "sonargen/mission.hpp"
#include "sonargen/nn/layers.hpp"
#include "sonargen/sequence.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sonargen::eval {

/// Gaussian moments of an embedded image set.
struct FrechetStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  std::size_t n = 0;
  std::vector<std::string> warnings;
};

/// Mean and population (1/n) covariance of the rows of `features` (n x d).
FrechetStats fit(const Eigen::MatrixXd& features);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dim() const = 0;
  /// Feature vector of one image; `index` is its position in the set.
  virtual Eigen::VectorXd embed(const Image& image, std::size_t index) = 0;
  virtual std::string kind() const = 0;
};

/// Seeded random convolutional projection: three strided conv + ReLU stages
/// with Gaussian weights, then global average pooling.
class RandomConvEmbedder : public Embedder {
 public:
  explicit RandomConvEmbedder(std::uint64_t seed = 0, int dim = 64);
  int dim() const override { return dim_; }
  Eigen::VectorXd embed(const Image& image, std::size_t index) override;
  std::string kind() const override { return "random_projection_conv"; }

 private:
  int dim_;
  nn::Sequential<float> net_;
};

/// Precomputed features: a flat float32 file of n x d values (row per image)
/// with a JSON sidecar {"n": n, "d": d}.
class ExternalFeatures : public Embedder {
 public:
  explicit ExternalFeatures(const std::filesystem::path& file);
  ExternalFeatures(Eigen::MatrixXd features) : features_(std::move(features)) {}
  int dim() const override { return int(features_.cols()); }
  Eigen::VectorXd embed(const Image& image, std::size_t index) override;
  std::string kind() const override { return "external_features"; }
  const Eigen::MatrixXd& features() const { return features_; }

 private:
  Eigen::MatrixXd features_;
};

void write_feature_file(const std::filesystem::path& file, const Eigen::MatrixXd& features);

/// Embeds images (values must lie in [0, 1]) and fits their moments.
FrechetStats embed_and_fit(const std::vector<Image>& images, Embedder& embedder);

/// d^2 = |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with the root
/// taken through the symmetric form S_a^(1/2) S_b S_a^(1/2).
double frechet_distance(const FrechetStats& a, const FrechetStats& b);

struct SeamReport {
  std::vector<double> seams;  // mean |row above - row below| per seam
  double seam_mean = 0;
  double baseline = 0;        // mean adjacent-row |difference| inside tiles
  double ratio = 1;           // +inf when the baseline is 0 and seams are not; 0/0 reads 1
};

SeamReport seam_discontinuity(const std::vector<ScanTile>& tiles);
inline SeamReport seam_discontinuity(const MissionScan& scan) { return seam_discontinuity(scan.tiles); }

/// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<float> a, std::vector<float> b);

struct ViewpointReport {
  std::map<std::string, double> ks;  // per terrain label
  std::vector<std::string> notes;    // labels skipped
};

/// Per-label KS between two generations over the same terrain; `map_b` is
/// the label grid that produced `gen_b` (row-reversed for an opposite pass).
ViewpointReport viewpoint_consistency(const Image& gen_a, const LabelGrid& map_a, const Image& gen_b,
                                      const LabelGrid& map_b, std::size_t min_pixels = 64);

inline constexpr double kAcquisitionPixelsPerSecond = 17100.0;

struct ThroughputReport {
  double pixels_per_second = 0;
  double realtime_ratio = 0;
  double seconds = 0;
  std::size_t tiles = 0;
  int warmup = 0;
  std::string mode;
  std::string hardware_note = "single process, no concurrent load assumed";
};

inline double realtime_ratio(double pixels_per_second) { return pixels_per_second / kAcquisitionPixelsPerSecond; }

/// Times `n_tiles` generator passes in the given mode after `warmup` untimed ones.
ThroughputReport throughput(const std::shared_ptr<gan::Model>& model, std::size_t n_tiles, GenerationMode mode,
                            int warmup = 3, std::uint64_t seed = 0);

struct DriftReport {
  double slope = 0;
  double intercept = 0;
  bool pass = false;
  std::size_t tiles = 0;
};

inline constexpr double kDriftThreshold = 1e-3;

/// Least-squares slope of per-tile mean intensity against tile index.
DriftReport drift_check(const std::vector<double>& tile_means, std::size_t min_tiles = 100);
DriftReport drift_check(const MissionScan& scan, std::size_t min_tiles = 100);

/// JSON forms; an infinite ratio is written as the string "+inf".
nlohmann::json to_json_value(const SeamReport& r);
nlohmann::json to_json_value(const DriftReport& r);
nlohmann::json to_json_value(const ViewpointReport& r);
nlohmann::json to_json_value(const ThroughputReport& r);

/// {metric, value, params, seed, hardware_note}
nlohmann::json report_entry(const std::string& metric, const nlohmann::json& value, const nlohmann::json& params,
                            std::uint64_t seed, const std::string& hardware_note = "");

}  // namespace sonargen::eval

#endif  // SONARGEN_EVALUATION_HPP
