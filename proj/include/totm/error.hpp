#pragma once

#include <stdexcept>
#include <string>

namespace totm {

/// Transform or buffer length that the routine cannot handle.
class InvalidLength : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor shapes that do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bad hyperparameter or configuration value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Checkpoint does not match the expected parameter layout. `path()` names
/// the first offending parameter.
class CheckpointMismatch : public std::runtime_error {
 public:
  CheckpointMismatch(std::string path, const std::string& what)
      : std::runtime_error(what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Heart-rate frequency outside the range a metric is defined for.
class OutOfBand : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace totm
