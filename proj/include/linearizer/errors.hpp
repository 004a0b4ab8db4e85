#pragma once

#include <stdexcept>
#include <string>

namespace linearizer {

// Base of every error the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes or dimensions do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced, SVD failure, or another numerical breakdown.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A documented precondition on arguments or object state was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Bad configuration or command-line usage. `field` is a dotted path like "training.lr".
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// File could not be read, written, or parsed (checksum mismatch, truncation, bad CSV).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace linearizer
