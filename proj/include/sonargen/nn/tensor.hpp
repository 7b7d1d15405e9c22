#ifndef SONARGEN_NN_TENSOR_HPP
#define SONARGEN_NN_TENSOR_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sonargen::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Spatial feature map. Rows of `data` index pixels (y * width + x), columns
/// index channels, so every channel plane is one contiguous column.
template <typename Scalar>
struct FeatureMap {
  int height = 0;
  int width = 0;
  Matrix<Scalar> data;

  FeatureMap() = default;
  FeatureMap(int h, int w, int channels)
      : height(h), width(w), data(Matrix<Scalar>::Zero(Eigen::Index(h) * w, channels)) {}

  int channels() const { return static_cast<int>(data.cols()); }
  Eigen::Index pixels() const { return data.rows(); }

  Scalar& at(int c, int y, int x) { return data(Eigen::Index(y) * width + x, c); }
  Scalar at(int c, int y, int x) const { return data(Eigen::Index(y) * width + x, c); }

  template <typename Other>
  FeatureMap<Other> cast() const {
    FeatureMap<Other> out;
    out.height = height;
    out.width = width;
    out.data = data.template cast<Other>();
    return out;
  }
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A trainable tensor and its gradient accumulator.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)),
        value(Matrix<Scalar>::Zero(rows, cols)),
        grad(Matrix<Scalar>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

using Rng = std::mt19937_64;

/// Per-call state shared by every layer during a forward pass.
struct ForwardContext {
  bool training = false;   // cache activations for backward
  bool noise = false;      // dropout active
  int slot = 0;            // sample index within the batch
  Rng* rng = nullptr;      // dropout source; required when noise is on
  std::vector<std::uint8_t>* kink_trace = nullptr;  // piecewise-linear branch record
};

}  // namespace sonargen::nn

#endif  // SONARGEN_NN_TENSOR_HPP
