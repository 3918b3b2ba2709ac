#pragma once

#include <stdexcept>
#include <string>

namespace tta {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not agree for the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Training or evaluation data is unusable (e.g. a class with no samples).
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment or task configuration. `path` names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Adaptation produced a non-finite loss; the run state is frozen.
class PoisonedStateError : public Error {
 public:
  PoisonedStateError(std::size_t step, const std::string& what)
      : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class UnsupportedMetricError : public Error {
 public:
  using Error::Error;
};

// Blind-spot filtering left nothing to adapt on.
class EmptySubsetError : public Error {
 public:
  using Error::Error;
};

}  // namespace tta
