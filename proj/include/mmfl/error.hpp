#pragma once

#include <stdexcept>
#include <string>

namespace mmfl {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or precondition on user-supplied parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that do not fit the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Two parameter maps that cannot be combined key by key.
class CompatibilityError : public Error {
 public:
  CompatibilityError(const std::string& key, const std::string& what)
      : Error("incompatible parameter '" + key + "': " + what), key_(key) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Malformed or inconsistent input data (CSV ingestion, dataset construction).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A broken internal invariant, e.g. a tape recorded for a different network.
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmfl
