#pragma once

#include <stdexcept>
#include <string>

namespace gbm {

// Error taxonomy mirrored by the CLI exit codes:
//   validation/configuration -> 1, I/O -> 2, training abort -> 3.

struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

// Zero-denominator metrics report null, never a silent 0.
struct UndefinedMetricError : ValidationError {
  explicit UndefinedMetricError(const std::string& msg) : ValidationError(msg) {}
};

}  // namespace gbm
