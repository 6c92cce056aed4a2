#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace restless_bai {

// Bad inputs: malformed configuration, violated model assumptions, calls that
// break a documented precondition.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Iterative routine ran out of iterations, or a linear system was singular.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Configuration-file error tagged with the offending field.
class ConfigError : public ValidationError {
 public:
  ConfigError(std::string field, const std::string& reason)
      : ValidationError(field + ": " + reason), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace restless_bai
