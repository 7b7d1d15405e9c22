#include "sonargen/evaluation.hpp"

#include "sonargen/image_io.hpp"
#include "sonargen/util.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace sonargen::eval {

FrechetStats fit(const Eigen::MatrixXd& features) {
  const auto n = features.rows();
  if (n < 2) throw ValidationError("moment fit needs at least 2 samples");
  FrechetStats s;
  s.n = std::size_t(n);
  s.mu = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mu.transpose();
  s.sigma = (centered.transpose() * centered) / double(n);
  s.sigma = 0.5 * (s.sigma + s.sigma.transpose());
  if (n < features.cols())
    s.warnings.push_back("n = " + std::to_string(n) + " is below the feature dimension " +
                         std::to_string(features.cols()) + "; covariance is rank deficient");
  return s;
}

// --- Embedders --------------------------------------------------------------

RandomConvEmbedder::RandomConvEmbedder(std::uint64_t seed, int dim) : dim_(dim) {
  if (dim < 4) throw ValidationError("embedder dimension must be at least 4");
  const int c1 = std::max(4, dim / 4), c2 = std::max(4, dim / 2);
  net_.add<nn::Conv2d<float>>(1, c1, 5, 2, 2, nn::PadMode::reflect);
  net_.add<nn::Rectifier<float>>();
  net_.add<nn::Conv2d<float>>(c1, c2, 3, 2, 1, nn::PadMode::reflect);
  net_.add<nn::Rectifier<float>>();
  net_.add<nn::Conv2d<float>>(c2, dim, 3, 2, 1, nn::PadMode::reflect);
  net_.add<nn::Rectifier<float>>();
  std::vector<nn::Parameter<float>*> params;
  net_.parameters(params);
  nn::Rng rng(derive_seed(seed, 77));
  for (auto* p : params) {
    if (p->name == "conv.weight") {
      // He scaling keeps activations of [0, 1] images in a stable range.
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / double(p->value.rows())));
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = float(normal(rng));
    } else {
      std::normal_distribution<double> normal(0.0, 0.1);
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = float(normal(rng));
    }
  }
}

Eigen::VectorXd RandomConvEmbedder::embed(const Image& image, std::size_t) {
  nn::FeatureMap<float> x(int(image.rows()), int(image.cols()), 1);
  x.data.col(0) = Eigen::Map<const Eigen::VectorXf>(image.data(), image.size());
  nn::ForwardContext ctx;
  const auto y = net_.forward(x, ctx);
  return y.data.colwise().mean().transpose().cast<double>();
}

ExternalFeatures::ExternalFeatures(const std::filesystem::path& file) {
  auto sidecar = file;
  sidecar += ".json";
  if (!std::filesystem::exists(sidecar)) throw IoError("feature file has no sidecar: " + sidecar.string());
  const auto meta = nlohmann::json::parse(read_file(sidecar), nullptr, false);
  if (meta.is_discarded() || !meta.contains("n") || !meta.contains("d"))
    throw IoError("feature sidecar needs n and d: " + sidecar.string());
  const auto n = meta["n"].get<std::size_t>(), d = meta["d"].get<std::size_t>();
  const std::string bytes = read_file(file);
  if (bytes.size() != n * d * sizeof(float))
    throw IoError("feature file holds " + std::to_string(bytes.size()) + " bytes, sidecar implies " +
                  std::to_string(n * d * sizeof(float)));
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::memcpy(f.data(), bytes.data(), bytes.size());
  features_ = f.cast<double>();
}

Eigen::VectorXd ExternalFeatures::embed(const Image&, std::size_t index) {
  if (Eigen::Index(index) >= features_.rows())
    throw ValidationError("feature file has no row " + std::to_string(index));
  return features_.row(Eigen::Index(index)).transpose();
}

void write_feature_file(const std::filesystem::path& file, const Eigen::MatrixXd& features) {
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f = features.cast<float>();
  write_file_atomic(file, std::string(reinterpret_cast<const char*>(f.data()), size_t(f.size()) * sizeof(float)));
  auto sidecar = file;
  sidecar += ".json";
  write_file_atomic(sidecar, nlohmann::json{{"n", f.rows()}, {"d", f.cols()}}.dump());
}

FrechetStats embed_and_fit(const std::vector<Image>& images, Embedder& embedder) {
  if (images.size() < 2) throw ValidationError("moment fit needs at least 2 images");
  Eigen::MatrixXd features(Eigen::Index(images.size()), embedder.dim());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& im = images[i];
    if (im.size() == 0) throw ValidationError("image " + std::to_string(i) + " is empty");
    if (!im.allFinite() || im.minCoeff() < 0.0f || im.maxCoeff() > 1.0f)
      throw ValidationError("image " + std::to_string(i) + " is not normalized to [0, 1]");
    features.row(Eigen::Index(i)) = embedder.embed(im, i).transpose();
  }
  return fit(features);
}

namespace {

// Symmetric square root, clipping eigenvalues that are negative only by
// round-off.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw NumericError(std::string("eigendecomposition failed for ") + what);
  Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-8 * scale) {
      std::ostringstream msg;
      msg << what << " is not positive semidefinite: eigenvalue " << ev(i) << ", largest " << ev.maxCoeff()
          << ", condition estimate " << (ev.maxCoeff() / std::max(std::abs(ev.minCoeff()), 1e-300));
      throw NumericError(msg.str());
    }
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const FrechetStats& a, const FrechetStats& b) {
  if (a.mu.size() != b.mu.size() || a.sigma.rows() != b.sigma.rows())
    throw ValidationError("frechet_distance: feature dimensions differ (" + std::to_string(a.mu.size()) + " vs " +
                          std::to_string(b.mu.size()) + ")");
  if (a.mu == b.mu && a.sigma == b.sigma) return 0.0;
  const Eigen::MatrixXd ra = sqrt_psd(a.sigma, "sigma_a");
  const Eigen::MatrixXd m = ra * b.sigma * ra;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed for the covariance product");
  const auto& ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  double tr_sqrt = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-8 * scale) {
      std::ostringstream msg;
      msg << "covariance product has eigenvalue " << ev(i) << " (largest " << ev.maxCoeff() << ")";
      throw NumericError(msg.str());
    }
    tr_sqrt += std::sqrt(std::max(ev(i), 0.0));
  }
  const double d2 = (a.mu - b.mu).squaredNorm() + a.sigma.trace() + b.sigma.trace() - 2.0 * tr_sqrt;
  return std::max(d2, 0.0);
}

// --- Seams ------------------------------------------------------------------

SeamReport seam_discontinuity(const std::vector<ScanTile>& tiles) {
  if (tiles.size() < 2) throw ValidationError("seam_discontinuity needs at least 2 tiles");
  SeamReport r;
  double base_sum = 0;
  long base_n = 0;
  for (const auto& t : tiles) {
    for (int row = 1; row < t.valid_rows; ++row) {
      base_sum += (t.intensity.row(row) - t.intensity.row(row - 1)).cwiseAbs().cast<double>().mean();
      ++base_n;
    }
  }
  for (std::size_t i = 1; i < tiles.size(); ++i) {
    const auto& a = tiles[i - 1];
    const auto& b = tiles[i];
    r.seams.push_back((a.intensity.row(a.valid_rows - 1) - b.intensity.row(0)).cwiseAbs().cast<double>().mean());
  }
  for (double s : r.seams) r.seam_mean += s;
  r.seam_mean /= double(r.seams.size());
  r.baseline = base_n > 0 ? base_sum / double(base_n) : 0.0;
  if (r.baseline > 0)
    r.ratio = r.seam_mean / r.baseline;
  else
    r.ratio = r.seam_mean > 0 ? std::numeric_limits<double>::infinity() : 1.0;
  return r;
}

double ks_statistic(std::vector<float> a, std::vector<float> b) {
  if (a.empty() || b.empty()) throw ValidationError("ks_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  const double na = double(a.size()), nb = double(b.size());
  while (i < a.size() && j < b.size()) {
    const float x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / na - double(j) / nb));
  }
  return d;
}

ViewpointReport viewpoint_consistency(const Image& gen_a, const LabelGrid& map_a, const Image& gen_b,
                                      const LabelGrid& map_b, std::size_t min_pixels) {
  if (gen_a.rows() != map_a.rows() || gen_a.cols() != map_a.cols() || gen_b.rows() != map_b.rows() ||
      gen_b.cols() != map_b.cols())
    throw ValidationError("viewpoint_consistency: image and map shapes differ");
  ViewpointReport rep;
  std::vector<std::vector<float>> a(kNumLabels), b(kNumLabels);
  for (Eigen::Index i = 0; i < gen_a.size(); ++i) a[map_a.data()[i]].push_back(gen_a.data()[i]);
  for (Eigen::Index i = 0; i < gen_b.size(); ++i) b[map_b.data()[i]].push_back(gen_b.data()[i]);
  for (int l = 0; l < kNumLabels; ++l) {
    const auto name = to_string(static_cast<TerrainLabel>(l));
    if (a[size_t(l)].size() < min_pixels || b[size_t(l)].size() < min_pixels) {
      rep.notes.push_back(name + ": absent or under " + std::to_string(min_pixels) + " pixels, skipped");
      continue;
    }
    rep.ks[name] = ks_statistic(std::move(a[size_t(l)]), std::move(b[size_t(l)]));
  }
  return rep;
}

// --- Throughput and drift ---------------------------------------------------

ThroughputReport throughput(const std::shared_ptr<gan::Model>& model, std::size_t n_tiles, GenerationMode mode,
                            int warmup, std::uint64_t seed) {
  if (n_tiles == 0) throw ValidationError("throughput: n_tiles must be positive");
  if (warmup < 0) throw ValidationError("throughput: warmup must be non-negative");
  const int H = model->tile_rows, W = model->tile_cols;
  auto tiles = [H, W](std::size_t t) {
    SemanticTile s;
    s.labels = LabelGrid::Constant(H, W, static_cast<std::uint8_t>(TerrainLabel::flat));
    s.tile_index = int(t);
    s.valid_rows = H;
    return s;
  };
  const std::size_t total = n_tiles + std::size_t(warmup);
  YawMetric yaw;
  yaw.theta.assign(total * std::size_t(H), 5.0);
  yaw.sign.assign(total * std::size_t(H), 0);
  GenerationOptions opt;
  opt.mode = mode;
  opt.seed = seed;
  MissionStream stream(model, tiles, total, std::move(yaw), opt);
  for (int i = 0; i < warmup; ++i) stream.next();
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t done = 0;
  while (stream.next()) ++done;
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ThroughputReport r;
  r.tiles = done;
  r.warmup = warmup;
  r.seconds = sec;
  r.mode = to_string(mode);
  r.pixels_per_second = double(done) * H * W / std::max(sec, 1e-12);
  r.realtime_ratio = realtime_ratio(r.pixels_per_second);
  return r;
}

DriftReport drift_check(const std::vector<double>& tile_means, std::size_t min_tiles) {
  if (tile_means.size() < min_tiles)
    throw ValidationError("drift_check needs at least " + std::to_string(min_tiles) + " tiles, got " +
                          std::to_string(tile_means.size()));
  if (tile_means.size() < 2) throw ValidationError("drift_check needs at least 2 tiles");
  const double n = double(tile_means.size());
  const double mx = (n - 1) / 2.0;
  double my = 0;
  for (double v : tile_means) my += v;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < tile_means.size(); ++i) {
    sxy += (double(i) - mx) * (tile_means[i] - my);
    sxx += (double(i) - mx) * (double(i) - mx);
  }
  DriftReport r;
  r.tiles = tile_means.size();
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  r.pass = std::abs(r.slope) < kDriftThreshold;
  return r;
}

DriftReport drift_check(const MissionScan& scan, std::size_t min_tiles) {
  std::vector<double> means;
  for (const auto& t : scan.tiles) means.push_back(t.intensity.topRows(t.valid_rows).cast<double>().mean());
  return drift_check(means, min_tiles);
}

namespace {
nlohmann::json number(double v) {
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}
}  // namespace

nlohmann::json to_json_value(const SeamReport& r) {
  nlohmann::json seams = nlohmann::json::array();
  for (double s : r.seams) seams.push_back(number(s));
  return {{"ratio", number(r.ratio)}, {"seam_mean", number(r.seam_mean)}, {"baseline", number(r.baseline)},
          {"seams", seams}};
}

nlohmann::json to_json_value(const DriftReport& r) {
  return {{"slope", r.slope}, {"intercept", r.intercept}, {"pass", r.pass}, {"tiles", r.tiles},
          {"threshold", kDriftThreshold}};
}

nlohmann::json to_json_value(const ViewpointReport& r) {
  return {{"ks", r.ks}, {"notes", r.notes}};
}

nlohmann::json to_json_value(const ThroughputReport& r) {
  return {{"pixels_per_second", r.pixels_per_second},
          {"realtime_ratio", r.realtime_ratio},
          {"acquisition_pixels_per_second", kAcquisitionPixelsPerSecond},
          {"seconds", r.seconds},
          {"tiles", r.tiles},
          {"warmup", r.warmup},
          {"mode", r.mode},
          {"hardware_note", r.hardware_note}};
}

nlohmann::json report_entry(const std::string& metric, const nlohmann::json& value, const nlohmann::json& params,
                            std::uint64_t seed, const std::string& hardware_note) {
  return {{"metric", metric}, {"value", value}, {"params", params}, {"seed", seed}, {"hardware_note", hardware_note}};
}

}  // namespace sonargen::eval
