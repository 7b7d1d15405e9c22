#ifndef SONARGEN_GAN_LOSS_HPP
#define SONARGEN_GAN_LOSS_HPP

#include "sonargen/nn/tensor.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace sonargen::gan {

using nn::FeatureMap;
using nn::Matrix;

/// log(1 + exp(x)) without overflow; exact 0 for x = -inf.
template <typename Scalar>
Scalar softplus(Scalar x) {
  if (x == -std::numeric_limits<Scalar>::infinity()) return Scalar(0);
  return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename Scalar>
Scalar logistic(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

/// Loss value plus its gradient with respect to each sample's input.
template <typename Scalar>
struct LossTerm {
  Scalar value = Scalar(0);
  std::vector<FeatureMap<Scalar>> grad;
};

template <typename Scalar>
void require_finite(const std::vector<FeatureMap<Scalar>>& maps, const char* what) {
  for (const auto& m : maps)
    if (!m.data.allFinite()) throw nn::NumericError(std::string("non-finite ") + what);
}

/// Binary cross-entropy against a constant target over a batch of logit
/// grids, averaged over patches and batch.
template <typename Scalar>
LossTerm<Scalar> bce_with_logits(const std::vector<FeatureMap<Scalar>>& logits, bool target_real) {
  require_finite(logits, "discriminator logits");
  LossTerm<Scalar> out;
  Eigen::Index total = 0;
  for (const auto& l : logits) total += l.data.size();
  const Scalar inv_n = Scalar(1) / Scalar(total);
  for (const auto& l : logits) {
    FeatureMap<Scalar> g = l;
    for (Eigen::Index i = 0; i < l.data.size(); ++i) {
      const Scalar x = l.data.data()[i];
      // real: softplus(-x), d/dx = sigma(x) - 1 ; fake: softplus(x), d/dx = sigma(x)
      out.value += target_real ? softplus(-x) : softplus(x);
      g.data.data()[i] = (target_real ? logistic(x) - Scalar(1) : logistic(x)) * inv_n;
    }
    out.grad.push_back(std::move(g));
  }
  out.value *= inv_n;
  return out;
}

/// Discriminator objective: -mean log D(real) - mean log(1 - D(fake)).
template <typename Scalar>
Scalar d_loss(const std::vector<FeatureMap<Scalar>>& real_logits, const std::vector<FeatureMap<Scalar>>& fake_logits) {
  return bce_with_logits(real_logits, true).value + bce_with_logits(fake_logits, false).value;
}

/// Non-saturating adversarial term of the generator: -mean log D(fake).
template <typename Scalar>
LossTerm<Scalar> g_adversarial(const std::vector<FeatureMap<Scalar>>& fake_logits) {
  return bce_with_logits(fake_logits, true);
}

/// mean |real - fake| over the batch, gradient taken w.r.t. fake.
template <typename Scalar>
LossTerm<Scalar> l1_term(const std::vector<FeatureMap<Scalar>>& real, const std::vector<FeatureMap<Scalar>>& fake) {
  if (real.size() != fake.size()) throw nn::ShapeError("l1: batch size mismatch");
  LossTerm<Scalar> out;
  Eigen::Index total = 0;
  for (size_t i = 0; i < real.size(); ++i) {
    if (real[i].data.rows() != fake[i].data.rows() || real[i].data.cols() != fake[i].data.cols())
      throw nn::ShapeError("l1: image shape mismatch");
    total += real[i].data.size();
  }
  require_finite(fake, "generator output");
  const Scalar inv_n = Scalar(1) / Scalar(total);
  for (size_t i = 0; i < real.size(); ++i) {
    const auto diff = (fake[i].data - real[i].data).array();
    out.value += diff.abs().sum();
    FeatureMap<Scalar> g = fake[i];
    g.data = (diff.sign() * inv_n).matrix();
    out.grad.push_back(std::move(g));
  }
  out.value *= inv_n;
  return out;
}

/// Generator objective: -mean log D(fake) + l1_weight * mean |real - fake|.
template <typename Scalar>
Scalar g_loss(const std::vector<FeatureMap<Scalar>>& fake_logits, const std::vector<FeatureMap<Scalar>>& real,
              const std::vector<FeatureMap<Scalar>>& fake, Scalar l1_weight) {
  return g_adversarial(fake_logits).value + l1_weight * l1_term(real, fake).value;
}

// Probability-space forms of the same objectives, for discriminators that
// report D(.) in [0, 1] directly.

inline double d_loss_from_probabilities(std::span<const double> d_real, std::span<const double> d_fake) {
  double a = 0.0, b = 0.0;
  for (double p : d_real) a -= std::log(p);
  for (double q : d_fake) b -= std::log1p(-q);
  return a / double(d_real.size()) + b / double(d_fake.size());
}

inline double g_adversarial_from_probabilities(std::span<const double> d_fake) {
  double a = 0.0;
  for (double q : d_fake) a -= std::log(q);
  return a / double(d_fake.size());
}

}  // namespace sonargen::gan

#endif  // SONARGEN_GAN_LOSS_HPP
