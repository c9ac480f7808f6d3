#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace autorobust {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes disagree with what a primitive expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller-supplied argument violates a precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// An object was used in the wrong lifecycle state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

// An invalid combination of options (unknown name, incompatible modes).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed external file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Structurally invalid domain value (genome out of bounds, bad genotype, bad config field).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Non-finite values appeared during training or evaluation.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace autorobust
