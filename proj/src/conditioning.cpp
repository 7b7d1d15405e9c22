#include "sonargen/conditioning.hpp"

#include <algorithm>
#include <cmath>

namespace sonargen {

ConditioningConfig ConditioningConfig::for_tile_rows(int tile_rows) {
  ConditioningConfig c;
  c.snippet_rows = std::max(1, static_cast<int>(std::lround(32.0 * tile_rows / 464.0)));
  return c;
}

void to_json(nlohmann::json& j, const ConditioningConfig& c) {
  j = {{"snippet_rows", c.snippet_rows}, {"lookahead", c.lookahead}, {"max_turn_deg", c.max_turn_deg}};
}

void from_json(const nlohmann::json& j, ConditioningConfig& c) {
  ConditioningConfig d;
  c.snippet_rows = j.value("snippet_rows", d.snippet_rows);
  c.lookahead = j.value("lookahead", d.lookahead);
  c.max_turn_deg = j.value("max_turn_deg", d.max_turn_deg);
}

YawSample yaw_metric(const AttitudeSeries& attitude, std::size_t t, int lookahead) {
  if (attitude.length() == 0) throw ValidationError("yaw_metric: empty attitude series");
  if (t >= attitude.length()) throw ValidationError("yaw_metric: ping index out of range");
  const std::size_t ahead = std::min(attitude.length() - 1, t + std::size_t(std::max(lookahead, 0)));
  const double diff = wrap_degrees(attitude.yaw_deg[t] - attitude.yaw_deg[ahead]);
  YawSample s;
  s.theta = 5.0 * std::max(1.0, std::abs(diff));
  s.sign = diff > 0 ? 1 : (diff < 0 ? -1 : 0);
  return s;
}

YawMetric yaw_metric_series(const AttitudeSeries& attitude, int lookahead) {
  YawMetric m;
  m.theta.reserve(attitude.length());
  m.sign.reserve(attitude.length());
  for (std::size_t t = 0; t < attitude.length(); ++t) {
    const auto s = yaw_metric(attitude, t, lookahead);
    m.theta.push_back(s.theta);
    m.sign.push_back(s.sign);
  }
  return m;
}

YawMetric yaw_rows(const YawMetric& series, std::size_t begin, int rows) {
  YawMetric out;
  out.theta.assign(std::size_t(rows), 5.0);
  out.sign.assign(std::size_t(rows), 0);
  for (int r = 0; r < rows; ++r) {
    const std::size_t i = begin + std::size_t(r);
    if (i >= series.theta.size()) break;
    out.theta[std::size_t(r)] = series.theta[i];
    out.sign[std::size_t(r)] = series.sign[i];
  }
  return out;
}

std::pair<Image, Image> yaw_channels(const std::vector<double>& theta_rows, const std::vector<int>& sign_rows, int H,
                                     int W, double theta_max) {
  if (int(theta_rows.size()) != H || int(sign_rows.size()) != H)
    throw ValidationError("yaw_channels: need one theta and sign per row");
  Image cw = Image::Zero(H, W);
  Image ccw = Image::Zero(H, W);
  for (int r = 0; r < H; ++r) {
    const float v = static_cast<float>(std::min(theta_rows[size_t(r)] / theta_max, 1.0));
    if (sign_rows[size_t(r)] > 0)
      cw.row(r).setConstant(v);
    else if (sign_rows[size_t(r)] < 0)
      ccw.row(r).setConstant(v);
  }
  return {std::move(cw), std::move(ccw)};
}

Snippet extract_snippet(const ScanTile* prev, int snippet_rows, int width) {
  Snippet s;
  s.rows = Image::Zero(snippet_rows, width);
  if (!prev) return s;
  if (prev->cols() != width) throw ValidationError("extract_snippet: width mismatch");
  const int valid = std::clamp(prev->valid_rows, 0, prev->rows());
  const int take = std::min(valid, snippet_rows);
  s.rows.bottomRows(take) = prev->intensity.middleRows(valid - take, take);
  s.source_tile_index = prev->tile_index;
  return s;
}

ConditioningBlock make_conditioning(const Snippet& snippet, const YawMetric& rows, int H, int W, double theta_max) {
  ConditioningBlock b;
  b.snippet = snippet;
  std::tie(b.yaw_cw, b.yaw_ccw) = yaw_channels(rows.theta, rows.sign, H, W, theta_max);
  return b;
}

Image normalize_labels(const LabelGrid& labels) {
  return labels.cast<float>() / float(kNumLabels - 1);
}

Image pad_snippet(const Snippet& snippet, int H) {
  if (snippet.rows.rows() > H) throw ValidationError("snippet taller than tile");
  Image out = Image::Zero(H, snippet.rows.cols());
  out.topRows(snippet.rows.rows()) = snippet.rows;
  return out;
}

void set_channel(nn::FeatureMap<float>& map, int c, const Image& image) {
  if (image.rows() != map.height || image.cols() != map.width) throw ShapeError("channel shape mismatch");
  map.data.col(c) = Eigen::Map<const Eigen::VectorXf>(image.data(), image.size());
}

Image get_channel(const nn::FeatureMap<float>& map, int c) {
  Image out(map.height, map.width);
  Eigen::Map<Eigen::VectorXf>(out.data(), out.size()) = map.data.col(c);
  return out;
}

Image GeneratorInput::channel(int c) const { return get_channel(channels, c); }

DiscriminatorInput::DiscriminatorInput(nn::FeatureMap<float> stack) : channels(std::move(stack)) {
  if (channels.channels() != kChannels)
    throw ValidationError("discriminator input takes exactly 3 channels, got " + std::to_string(channels.channels()));
}

Image DiscriminatorInput::channel(int c) const { return get_channel(channels, c); }

GeneratorInput assemble_generator_input(const SemanticTile& x, const ConditioningBlock& c) {
  const int H = x.rows(), W = x.cols();
  if (c.yaw_cw.rows() != H || c.yaw_cw.cols() != W || c.yaw_ccw.rows() != H || c.yaw_ccw.cols() != W)
    throw ValidationError("generator input: yaw channel shape mismatch");
  if (c.snippet.rows.cols() != W || c.snippet.rows.rows() > H)
    throw ValidationError("generator input: snippet shape mismatch");
  GeneratorInput in;
  in.channels = nn::FeatureMap<float>(H, W, GeneratorInput::kChannels);
  set_channel(in.channels, kMapChannel, normalize_labels(x.labels));
  set_channel(in.channels, kYawCwChannel, c.yaw_cw);
  set_channel(in.channels, kYawCcwChannel, c.yaw_ccw);
  set_channel(in.channels, kSnippetChannel, pad_snippet(c.snippet, H));
  return in;
}

DiscriminatorInput assemble_discriminator_input(const SemanticTile& x, const Snippet& snippet, const Image& image) {
  const int H = x.rows(), W = x.cols();
  if (image.rows() != H || image.cols() != W) throw ValidationError("discriminator input: image shape mismatch");
  if (snippet.rows.cols() != W || snippet.rows.rows() > H)
    throw ValidationError("discriminator input: snippet shape mismatch");
  nn::FeatureMap<float> stack(H, W, DiscriminatorInput::kChannels);
  set_channel(stack, kDiscMapChannel, normalize_labels(x.labels));
  set_channel(stack, kDiscSnippetChannel, pad_snippet(snippet, H));
  set_channel(stack, kDiscImageChannel, image);
  return DiscriminatorInput(std::move(stack));
}

}  // namespace sonargen
