#ifndef SONARGEN_NN_ADAM_HPP
#define SONARGEN_NN_ADAM_HPP

#include "sonargen/nn/tensor.hpp"

#include <cmath>
#include <vector>

namespace sonargen::nn {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<Parameter<Scalar>*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  /// Applies one update from the accumulated gradients, then zeroes them.
  void step() {
    ++steps_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(steps_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(steps_));
    const Scalar lr = Scalar(cfg_.learning_rate * std::sqrt(c2) / c1);
    const Scalar b1 = Scalar(cfg_.beta1), b2 = Scalar(cfg_.beta2);
    const Scalar eps = Scalar(cfg_.eps * std::sqrt(c2));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& g = params_[i]->grad;
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseAbs2();
      params_[i]->value.array() -= lr * m_[i].array() / (v_[i].array().sqrt() + eps);
      g.setZero();
    }
  }

  long steps() const { return steps_; }

 private:
  std::vector<Parameter<Scalar>*> params_;
  AdamConfig cfg_;
  std::vector<Matrix<Scalar>> m_;
  std::vector<Matrix<Scalar>> v_;
  long steps_ = 0;
};

}  // namespace sonargen::nn

#endif  // SONARGEN_NN_ADAM_HPP
