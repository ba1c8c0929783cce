#pragma once

#include <stdexcept>
#include <string>

namespace rangecast {

/// Base class for all rangecast errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration (bad key, bad value, missing section). CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing input data. CLI exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Numeric failure (non-finite loss, failed gradient check). CLI exit code 4.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API contract (shape mismatch, invalid argument).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace rangecast
