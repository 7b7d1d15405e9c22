#ifndef SONARGEN_NN_LAYERS_HPP
#define SONARGEN_NN_LAYERS_HPP

#include "sonargen/nn/im2col.hpp"
#include "sonargen/nn/tensor.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace sonargen::nn {

/// Cache entry for a batch slot, growing the cache as needed.
template <typename T>
T& slot_of(std::vector<T>& caches, int slot) {
  if (static_cast<int>(caches.size()) <= slot) caches.resize(size_t(slot) + 1);
  return caches[size_t(slot)];
}

template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;

  /// Forward one sample. In training mode the layer caches what backward
  /// needs under ctx.slot.
  virtual FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, ForwardContext& ctx) = 0;

  /// Backward for the sample cached under `slot`; accumulates parameter
  /// gradients and returns the input gradient.
  virtual FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy, int slot) = 0;

  virtual void parameters(std::vector<Parameter<Scalar>*>&) {}

  /// Drops cached activations.
  virtual void clear() {}
};

template <typename Scalar>
using LayerPtr = std::unique_ptr<Layer<Scalar>>;

// ---------------------------------------------------------------------------

template <typename Scalar>
class Conv2d : public Layer<Scalar> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, PadMode mode,
         const std::string& name = "conv")
      : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(pad), mode_(mode),
        weight_(name + ".weight", Eigen::Index(in_channels) * kernel * kernel, out_channels),
        bias_(name + ".bias", 1, out_channels) {}

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, ForwardContext& ctx) override {
    if (x.channels() != in_) throw ShapeError("conv2d: channel mismatch");
    const auto g = ConvGeometry::make(x.height, x.width, k_, stride_, pad_, mode_);
    const auto rows = g.row_table();
    const auto cols = g.col_table();
    FeatureMap<Scalar> y(g.out_h, g.out_w, out_);
    const int step = chunk_rows(g, in_ * k_ * k_, sizeof(Scalar));
    Matrix<Scalar> patches;
    for (int r0 = 0; r0 < g.out_h; r0 += step) {
      const int r1 = std::min(g.out_h, r0 + step);
      im2col(g, x.data, r0, r1, rows, cols, patches);
      y.data.middleRows(Eigen::Index(r0) * g.out_w, patches.rows()).noalias() = patches * weight_.value;
    }
    y.data.rowwise() += bias_.value.row(0);
    if (ctx.training) slot_of(inputs_, ctx.slot) = x;
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy, int slot) override {
    const FeatureMap<Scalar>& x = inputs_.at(size_t(slot));
    const auto g = ConvGeometry::make(x.height, x.width, k_, stride_, pad_, mode_);
    const auto rows = g.row_table();
    const auto cols = g.col_table();
    FeatureMap<Scalar> dx(x.height, x.width, in_);
    bias_.grad.row(0) += dy.data.colwise().sum();
    const int step = chunk_rows(g, in_ * k_ * k_, sizeof(Scalar));
    Matrix<Scalar> patches;
    Matrix<Scalar> dpatches;
    for (int r0 = 0; r0 < g.out_h; r0 += step) {
      const int r1 = std::min(g.out_h, r0 + step);
      im2col(g, x.data, r0, r1, rows, cols, patches);
      const auto dy_rows = dy.data.middleRows(Eigen::Index(r0) * g.out_w, patches.rows());
      weight_.grad.noalias() += patches.transpose() * dy_rows;
      dpatches.noalias() = dy_rows * weight_.value.transpose();
      col2im(g, dpatches, r0, r1, rows, cols, dx.data);
    }
    return dx;
  }

  void parameters(std::vector<Parameter<Scalar>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  void clear() override { inputs_.clear(); }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }

 private:
  int in_, out_, k_, stride_, pad_;
  PadMode mode_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  std::vector<FeatureMap<Scalar>> inputs_;
};

/// Transposed 3x3-style convolution doubling spatial size
/// (stride 2, pad 1, output padding 1 when kernel is 3).
template <typename Scalar>
class ConvTranspose2d : public Layer<Scalar> {
 public:
  ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride, int pad)
      : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(pad),
        weight_("convt.weight", in_channels, Eigen::Index(out_channels) * kernel * kernel),
        bias_("convt.bias", 1, out_channels) {}

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, ForwardContext& ctx) override {
    if (x.channels() != in_) throw ShapeError("conv_transpose2d: channel mismatch");
    const auto g = geometry(x.height, x.width);
    const auto rows = g.row_table();
    const auto cols = g.col_table();
    FeatureMap<Scalar> y(g.in_h, g.in_w, out_);
    const int step = chunk_rows(g, out_ * k_ * k_, sizeof(Scalar));
    Matrix<Scalar> patches;
    for (int r0 = 0; r0 < g.out_h; r0 += step) {
      const int r1 = std::min(g.out_h, r0 + step);
      patches.noalias() = x.data.middleRows(Eigen::Index(r0) * g.out_w, Eigen::Index(r1 - r0) * g.out_w) * weight_.value;
      col2im(g, patches, r0, r1, rows, cols, y.data);
    }
    y.data.rowwise() += bias_.value.row(0);
    if (ctx.training) slot_of(inputs_, ctx.slot) = x;
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy, int slot) override {
    const FeatureMap<Scalar>& x = inputs_.at(size_t(slot));
    const auto g = geometry(x.height, x.width);
    const auto rows = g.row_table();
    const auto cols = g.col_table();
    FeatureMap<Scalar> dx(x.height, x.width, in_);
    bias_.grad.row(0) += dy.data.colwise().sum();
    const int step = chunk_rows(g, out_ * k_ * k_, sizeof(Scalar));
    Matrix<Scalar> patches;
    for (int r0 = 0; r0 < g.out_h; r0 += step) {
      const int r1 = std::min(g.out_h, r0 + step);
      im2col(g, dy.data, r0, r1, rows, cols, patches);
      const Eigen::Index n = Eigen::Index(r1 - r0) * g.out_w;
      const auto x_rows = x.data.middleRows(Eigen::Index(r0) * g.out_w, n);
      weight_.grad.noalias() += x_rows.transpose() * patches;
      dx.data.middleRows(Eigen::Index(r0) * g.out_w, n).noalias() = patches * weight_.value.transpose();
    }
    return dx;
  }

  void parameters(std::vector<Parameter<Scalar>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  void clear() override { inputs_.clear(); }

 private:
  ConvGeometry geometry(int h, int w) const {
    // The transposed op is the adjoint of a conv from the doubled grid.
    const int big_h = (h - 1) * stride_ - 2 * pad_ + k_ + (stride_ - 1);
    const int big_w = (w - 1) * stride_ - 2 * pad_ + k_ + (stride_ - 1);
    auto g = ConvGeometry::make(big_h, big_w, k_, stride_, pad_, PadMode::zero);
    if (g.out_h != h || g.out_w != w) throw ShapeError("conv_transpose2d: inconsistent geometry");
    return g;
  }

  int in_, out_, k_, stride_, pad_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  std::vector<FeatureMap<Scalar>> inputs_;
};

/// Per-sample, per-channel normalization with a learned affine map.
template <typename Scalar>
class InstanceNorm : public Layer<Scalar> {
 public:
  explicit InstanceNorm(int channels, Scalar eps = Scalar(1e-5))
      : eps_(eps), gamma_("norm.gamma", 1, channels), beta_("norm.beta", 1, channels) {
    gamma_.value.setOnes();
  }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, ForwardContext& ctx) override {
    const Scalar n = Scalar(x.pixels());
    RowVector<Scalar> mean = x.data.colwise().sum() / n;
    FeatureMap<Scalar> xhat = x;
    xhat.data.rowwise() -= mean;
    RowVector<Scalar> inv_std =
        ((xhat.data.array().square().colwise().sum() / n) + eps_).rsqrt().matrix();
    xhat.data.array().rowwise() *= inv_std.array();
    FeatureMap<Scalar> y = xhat;
    y.data.array().rowwise() *= gamma_.value.row(0).array();
    y.data.rowwise() += beta_.value.row(0);
    if (ctx.training) {
      auto& c = slot_of(caches_, ctx.slot);
      c.xhat = std::move(xhat);
      c.inv_std = inv_std;
    }
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy, int slot) override {
    const auto& c = caches_.at(size_t(slot));
    const Scalar n = Scalar(dy.pixels());
    gamma_.grad.row(0) += (dy.data.array() * c.xhat.data.array()).colwise().sum().matrix();
    beta_.grad.row(0) += dy.data.colwise().sum();
    // dxhat = dy * gamma
    Matrix<Scalar> dxhat = dy.data;
    dxhat.array().rowwise() *= gamma_.value.row(0).array();
    RowVector<Scalar> mean_dxhat = dxhat.colwise().sum() / n;
    RowVector<Scalar> mean_dxhat_xhat = (dxhat.array() * c.xhat.data.array()).colwise().sum().matrix() / n;
    FeatureMap<Scalar> dx;
    dx.height = dy.height;
    dx.width = dy.width;
    dx.data = dxhat;
    dx.data.rowwise() -= mean_dxhat;
    dx.data.array() -= c.xhat.data.array().rowwise() * mean_dxhat_xhat.array();
    dx.data.array().rowwise() *= c.inv_std.array();
    return dx;
  }

  void parameters(std::vector<Parameter<Scalar>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void clear() override { caches_.clear(); }

 private:
  struct Cache {
    FeatureMap<Scalar> xhat;
    RowVector<Scalar> inv_std;
  };
  Scalar eps_;
  Parameter<Scalar> gamma_;
  Parameter<Scalar> beta_;
  std::vector<Cache> caches_;
};

/// ReLU for slope 0, leaky ReLU otherwise.
template <typename Scalar>
class Rectifier : public Layer<Scalar> {
 public:
  explicit Rectifier(Scalar negative_slope = Scalar(0)) : slope_(negative_slope) {}

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, ForwardContext& ctx) override {
    FeatureMap<Scalar> y = x;
    y.data = (x.data.array() > Scalar(0)).select(x.data, slope_ * x.data);
    if (ctx.kink_trace) {
      const Scalar* p = x.data.data();
      for (Eigen::Index i = 0; i < x.data.size(); ++i) ctx.kink_trace->push_back(p[i] > Scalar(0));
    }
    if (ctx.training) slot_of(inputs_, ctx.slot) = x;
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy, int slot) override {
    const auto& x = inputs_.at(size_t(slot));
    FeatureMap<Scalar> dx = dy;
    dx.data = (x.data.array() > Scalar(0)).select(dy.data, slope_ * dy.data);
    return dx;
  }
  void clear() override { inputs_.clear(); }

 private:
  Scalar slope_;
  std::vector<FeatureMap<Scalar>> inputs_;
};

template <typename Scalar>
class Sigmoid : public Layer<Scalar> {
 public:
  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, ForwardContext& ctx) override {
    FeatureMap<Scalar> y = x;
    y.data = (Scalar(1) / (Scalar(1) + (-x.data.array()).exp())).matrix();
    if (ctx.training) slot_of(outputs_, ctx.slot) = y;
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy, int slot) override {
    const auto& y = outputs_.at(size_t(slot));
    FeatureMap<Scalar> dx = dy;
    dx.data.array() *= y.data.array() * (Scalar(1) - y.data.array());
    return dx;
  }
  void clear() override { outputs_.clear(); }

 private:
  std::vector<FeatureMap<Scalar>> outputs_;
};

/// Inverted dropout; identity unless ctx.noise is set. The mask is drawn
/// from ctx.rng so a seeded context reproduces it exactly.
template <typename Scalar>
class Dropout : public Layer<Scalar> {
 public:
  explicit Dropout(double rate) : rate_(rate) {}

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, ForwardContext& ctx) override {
    const bool active = ctx.noise && rate_ > 0.0;
    if (!active) {
      if (ctx.training) slot_of(masks_, ctx.slot).resize(0, 0);
      return x;
    }
    if (!ctx.rng) throw std::logic_error("dropout: noise requested without rng");
    std::bernoulli_distribution keep(1.0 - rate_);
    const Scalar scale = Scalar(1.0 / (1.0 - rate_));
    Matrix<Scalar> mask(x.data.rows(), x.data.cols());
    Scalar* m = mask.data();
    for (Eigen::Index i = 0; i < mask.size(); ++i) m[i] = keep(*ctx.rng) ? scale : Scalar(0);
    FeatureMap<Scalar> y = x;
    y.data.array() *= mask.array();
    if (ctx.training) slot_of(masks_, ctx.slot) = std::move(mask);
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy, int slot) override {
    const auto& mask = masks_.at(size_t(slot));
    if (mask.size() == 0) return dy;
    FeatureMap<Scalar> dx = dy;
    dx.data.array() *= mask.array();
    return dx;
  }
  void clear() override { masks_.clear(); }

 private:
  double rate_;
  std::vector<Matrix<Scalar>> masks_;
};

template <typename Scalar>
class Sequential : public Layer<Scalar> {
 public:
  Sequential() = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  void push(LayerPtr<Scalar> layer) { layers_.push_back(std::move(layer)); }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, ForwardContext& ctx) override {
    FeatureMap<Scalar> h = x;
    for (auto& l : layers_) h = l->forward(h, ctx);
    return h;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy, int slot) override {
    FeatureMap<Scalar> g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g, slot);
    return g;
  }

  void parameters(std::vector<Parameter<Scalar>*>& out) override {
    for (auto& l : layers_) l->parameters(out);
  }
  void clear() override {
    for (auto& l : layers_) l->clear();
  }

  size_t size() const { return layers_.size(); }

 private:
  std::vector<LayerPtr<Scalar>> layers_;
};

/// Nearest-neighbour 2x upsampling.
template <typename Scalar>
class Upsample2x : public Layer<Scalar> {
 public:
  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, ForwardContext&) override {
    FeatureMap<Scalar> y(2 * x.height, 2 * x.width, x.channels());
    for (int r = 0; r < y.height; ++r)
      for (int c = 0; c < y.width; ++c)
        y.data.row(Eigen::Index(r) * y.width + c) = x.data.row(Eigen::Index(r / 2) * x.width + c / 2);
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy, int) override {
    FeatureMap<Scalar> dx(dy.height / 2, dy.width / 2, dy.channels());
    for (int r = 0; r < dy.height; ++r)
      for (int c = 0; c < dy.width; ++c)
        dx.data.row(Eigen::Index(r / 2) * dx.width + c / 2) += dy.data.row(Eigen::Index(r) * dy.width + c);
    return dx;
  }
};

/// y = x + body(x)
template <typename Scalar>
class Residual : public Layer<Scalar> {
 public:
  explicit Residual(std::unique_ptr<Sequential<Scalar>> body) : body_(std::move(body)) {}

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, ForwardContext& ctx) override {
    FeatureMap<Scalar> y = body_->forward(x, ctx);
    y.data += x.data;
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy, int slot) override {
    FeatureMap<Scalar> dx = body_->backward(dy, slot);
    dx.data += dy.data;
    return dx;
  }

  void parameters(std::vector<Parameter<Scalar>*>& out) override { body_->parameters(out); }
  void clear() override { body_->clear(); }

 private:
  std::unique_ptr<Sequential<Scalar>> body_;
};

}  // namespace sonargen::nn

#endif  // SONARGEN_NN_LAYERS_HPP
