#ifndef SONARGEN_GAN_GRAD_CHECK_HPP
#define SONARGEN_GAN_GRAD_CHECK_HPP

#include "sonargen/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sonargen::gan {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  /// Entries whose +/-epsilon stencil flips a rectifier branch; central
  /// differences are meaningless across the kink so they are not scored.
  std::size_t skipped_at_kinks = 0;
  std::string worst_parameter;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Loss evaluation used by grad_check. When `with_grad` is set the callee
/// must also accumulate analytic gradients into the parameters' `grad`.
/// `trace` receives rectifier branch decisions for kink detection.
template <typename Scalar>
using LossFn = std::function<Scalar(bool with_grad, std::vector<std::uint8_t>* trace)>;

/// Compares analytic gradients with central finite differences.
/// Relative error is |a - n| / max(|a|, |n|, floor); `floor` keeps
/// vanishing gradients from dominating through round-off alone.
template <typename Scalar>
GradCheckResult grad_check(const LossFn<Scalar>& loss_fn, const std::vector<nn::Parameter<Scalar>*>& params,
                           double epsilon, double floor = 1e-7) {
  for (auto* p : params) p->zero_grad();
  std::vector<std::uint8_t> base_trace;
  loss_fn(true, &base_trace);
  std::vector<nn::Matrix<Scalar>> analytic;
  for (auto* p : params) analytic.push_back(p->grad);

  GradCheckResult result;
  std::vector<std::uint8_t> trace;
  for (size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k]->value;
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const Scalar saved = value.data()[i];
      value.data()[i] = saved + Scalar(epsilon);
      trace.clear();
      const double plus = double(loss_fn(false, &trace));
      bool kink = trace != base_trace;
      value.data()[i] = saved - Scalar(epsilon);
      trace.clear();
      const double minus = double(loss_fn(false, &trace));
      kink = kink || trace != base_trace;
      value.data()[i] = saved;
      if (kink) {
        ++result.skipped_at_kinks;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double a = double(analytic[k].data()[i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = params[k]->name;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
      ++result.checked;
    }
  }
  for (auto* p : params) p->zero_grad();
  return result;
}

}  // namespace sonargen::gan

#endif  // SONARGEN_GAN_GRAD_CHECK_HPP
