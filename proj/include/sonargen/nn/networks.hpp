#ifndef SONARGEN_NN_NETWORKS_HPP
#define SONARGEN_NN_NETWORKS_HPP

#include "sonargen/nn/layers.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace sonargen::nn {

enum class NormKind { instance, none };

NormKind norm_from_string(const std::string& s);
std::string to_string(NormKind k);

enum class Upsampling { resize, transposed };

Upsampling upsampling_from_string(const std::string& s);
std::string to_string(Upsampling u);

/// normal: N(0, 0.02) weights. scaled: He-normal weights, residual output
/// convs shrunk by 10, for networks without normalization.
enum class InitScheme { normal, scaled };

InitScheme init_from_string(const std::string& s);
std::string to_string(InitScheme s);

struct GeneratorConfig {
  int in_channels = 4;
  int out_channels = 1;
  int base_width = 64;
  int n_resnet_blocks = 9;
  int n_downsamples = 2;
  bool noise_mode = true;      // dropout inside resnet blocks (the z source)
  double dropout_rate = 0.5;
  NormKind norm = NormKind::instance;
  bool stem_norm = false;  // normalizing the 7x7 stem erases tile-constant inputs such as yaw
  // transposed: stride-2 transposed convs and zero-padded downsampling.
  // resize: nearest 2x + reflect-padded 3x3 conv, downsampling reflect-padded too.
  Upsampling upsampling = Upsampling::transposed;
  InitScheme init = InitScheme::normal;

  void validate() const;
};

struct DiscriminatorConfig {
  int in_channels = 3;
  int base_width = 64;
  int n_layers = 3;
  NormKind norm = NormKind::instance;

  void validate() const;
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);
void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

/// Gaussian weights per `scheme`, zero biases, unit norm gains.
template <typename Scalar>
void initialize(std::vector<Parameter<Scalar>*> params, std::uint64_t seed, InitScheme scheme = InitScheme::normal) {
  Rng rng(seed);
  for (auto* p : params) {
    if (p->name == "norm.gamma") {
      p->value.setOnes();
    } else if (p->name.ends_with(".weight")) {
      double sigma = 0.02;
      if (scheme == InitScheme::scaled) {
        // conv weights are (in*k*k) x out; transposed ones in x (out*k*k), stride 2
        const double fan_in =
            p->name.starts_with("convt") ? double(p->value.cols()) / 4.0 : double(p->value.rows());
        sigma = std::sqrt(2.0 / fan_in);
        if (p->name.starts_with("res_out")) sigma *= 0.1;
      }
      std::normal_distribution<double> normal(0.0, sigma);
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = Scalar(normal(rng));
    } else {
      p->value.setZero();
    }
    p->zero_grad();
  }
}

template <typename Scalar>
class Network {
 public:
  virtual ~Network() = default;

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, ForwardContext& ctx) {
    check_input(x);
    return body_.forward(x, ctx);
  }
  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy, int slot) { return body_.backward(dy, slot); }

  std::vector<Parameter<Scalar>*> parameters() {
    std::vector<Parameter<Scalar>*> out;
    body_.parameters(out);
    return out;
  }
  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += static_cast<std::size_t>(p->value.size());
    return n;
  }
  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }
  void clear() { body_.clear(); }

 protected:
  virtual void check_input(const FeatureMap<Scalar>& x) const = 0;
  Sequential<Scalar> body_;
};

/// Fully-convolutional resnet translator: (in, H, W) -> (out, H, W) in [0, 1].
template <typename Scalar>
class Generator : public Network<Scalar> {
 public:
  explicit Generator(const GeneratorConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    auto& b = this->body_;
    const int w = cfg.base_width;
    b.template add<Conv2d<Scalar>>(cfg.in_channels, w, 7, 1, 3, PadMode::reflect);
    if (cfg.stem_norm) add_norm(w);
    b.template add<Rectifier<Scalar>>();
    int ch = w;
    const PadMode down_pad = cfg.upsampling == Upsampling::resize ? PadMode::reflect : PadMode::zero;
    for (int i = 0; i < cfg.n_downsamples; ++i) {
      b.template add<Conv2d<Scalar>>(ch, ch * 2, 3, 2, 1, down_pad);
      ch *= 2;
      add_norm(ch);
      b.template add<Rectifier<Scalar>>();
    }
    for (int i = 0; i < cfg.n_resnet_blocks; ++i) {
      auto body = std::make_unique<Sequential<Scalar>>();
      body->template add<Conv2d<Scalar>>(ch, ch, 3, 1, 1, PadMode::reflect);
      if (cfg.norm == NormKind::instance) body->template add<InstanceNorm<Scalar>>(ch);
      body->template add<Rectifier<Scalar>>();
      if (cfg.noise_mode) body->template add<Dropout<Scalar>>(cfg.dropout_rate);
      body->template add<Conv2d<Scalar>>(ch, ch, 3, 1, 1, PadMode::reflect, "res_out");
      if (cfg.norm == NormKind::instance) body->template add<InstanceNorm<Scalar>>(ch);
      b.template add<Residual<Scalar>>(std::move(body));
    }
    for (int i = 0; i < cfg.n_downsamples; ++i) {
      if (cfg.upsampling == Upsampling::resize) {
        b.template add<Upsample2x<Scalar>>();
        b.template add<Conv2d<Scalar>>(ch, ch / 2, 3, 1, 1, PadMode::reflect);
      } else {
        b.template add<ConvTranspose2d<Scalar>>(ch, ch / 2, 3, 2, 1);
      }
      ch /= 2;
      add_norm(ch);
      b.template add<Rectifier<Scalar>>();
    }
    b.template add<Conv2d<Scalar>>(ch, cfg.out_channels, 7, 1, 3, PadMode::reflect);
    b.template add<Sigmoid<Scalar>>();
  }

  const GeneratorConfig& config() const { return cfg_; }

 protected:
  void check_input(const FeatureMap<Scalar>& x) const override {
    if (x.channels() != cfg_.in_channels)
      throw ShapeError("generator expects " + std::to_string(cfg_.in_channels) + " channels, got " +
                       std::to_string(x.channels()));
    const int m = 1 << cfg_.n_downsamples;
    if (x.height % m != 0 || x.width % m != 0)
      throw ShapeError("generator input " + std::to_string(x.height) + "x" + std::to_string(x.width) +
                       " not divisible by " + std::to_string(m));
  }

 private:
  void add_norm(int ch) {
    if (cfg_.norm == NormKind::instance) this->body_.template add<InstanceNorm<Scalar>>(ch);
  }
  GeneratorConfig cfg_;
};

/// Patch classifier emitting a grid of real/fake logits.
template <typename Scalar>
class Discriminator : public Network<Scalar> {
 public:
  explicit Discriminator(const DiscriminatorConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    auto& b = this->body_;
    const Scalar slope(0.2);
    int ch = cfg.base_width;
    b.template add<Conv2d<Scalar>>(cfg.in_channels, ch, 4, 2, 1, PadMode::zero);
    b.template add<Rectifier<Scalar>>(slope);
    int mult = 1;
    for (int n = 1; n < cfg.n_layers; ++n) {
      const int next = std::min(1 << n, 8);
      b.template add<Conv2d<Scalar>>(cfg.base_width * mult, cfg.base_width * next, 4, 2, 1, PadMode::zero);
      add_norm(cfg.base_width * next);
      b.template add<Rectifier<Scalar>>(slope);
      mult = next;
    }
    const int last = std::min(1 << cfg.n_layers, 8);
    b.template add<Conv2d<Scalar>>(cfg.base_width * mult, cfg.base_width * last, 4, 1, 1, PadMode::zero);
    add_norm(cfg.base_width * last);
    b.template add<Rectifier<Scalar>>(slope);
    b.template add<Conv2d<Scalar>>(cfg.base_width * last, 1, 4, 1, 1, PadMode::zero);
  }

  const DiscriminatorConfig& config() const { return cfg_; }

  /// Spatial size of the logit grid for an input of the given size.
  static std::pair<int, int> output_shape(const DiscriminatorConfig& cfg, int h, int w) {
    for (int n = 0; n < cfg.n_layers; ++n) {
      h = (h + 2 - 4) / 2 + 1;
      w = (w + 2 - 4) / 2 + 1;
    }
    return {h - 2, w - 2};
  }

 protected:
  void check_input(const FeatureMap<Scalar>& x) const override {
    if (x.channels() != cfg_.in_channels)
      throw ShapeError("discriminator expects " + std::to_string(cfg_.in_channels) + " channels, got " +
                       std::to_string(x.channels()));
    auto [h, w] = output_shape(cfg_, x.height, x.width);
    if (h < 1 || w < 1) throw ShapeError("discriminator input too small");
  }

 private:
  void add_norm(int ch) {
    if (cfg_.norm == NormKind::instance) this->body_.template add<InstanceNorm<Scalar>>(ch);
  }
  DiscriminatorConfig cfg_;
};

}  // namespace sonargen::nn

#endif  // SONARGEN_NN_NETWORKS_HPP
