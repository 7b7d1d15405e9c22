#ifndef SONARGEN_ERRORS_HPP
#define SONARGEN_ERRORS_HPP

#include "sonargen/nn/tensor.hpp"

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sonargen {

struct FieldError {
  std::string field;
  std::string message;
};

/// Invalid user input. Carries per-field messages when available.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
  explicit ValidationError(std::vector<FieldError> fields)
      : std::invalid_argument(join(fields)), fields_(std::move(fields)) {}

  const std::vector<FieldError>& fields() const { return fields_; }

 private:
  static std::string join(const std::vector<FieldError>& f) {
    std::string s;
    for (const auto& e : f) s += (s.empty() ? "" : "; ") + e.field + ": " + e.message;
    return s;
  }
  std::vector<FieldError> fields_;
};

/// Geometry outside the world map.
class BoundsError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using nn::NumericError;
using nn::ShapeError;

}  // namespace sonargen

#endif  // SONARGEN_ERRORS_HPP
