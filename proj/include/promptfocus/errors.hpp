#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameters, unknown config keys, inconsistent module setup.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Binary or JSON container does not match its declared layout.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset);
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

// Well-formed container with bad content (unknown class name, non-unit row).
class DataError : public Error {
 public:
  using Error::Error;
};

// Caller violated a precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Object used in the wrong lifecycle state (double backward, stale state).
class StateError : public Error {
 public:
  using Error::Error;
};

// A non-finite value was produced by the named operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace pf
