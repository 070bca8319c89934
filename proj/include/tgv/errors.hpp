#pragma once

#include <stdexcept>
#include <string>

namespace tgv {

/// Invalid tensor shapes or extents for an operation.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration values (bad hyperparameters, malformed config).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// API misuse (e.g. backward on a non-scalar, capture with gating disabled).
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite value detected at an op boundary, or a numeric abort in
/// training.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem / serialization failure; message names the path.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tgv
