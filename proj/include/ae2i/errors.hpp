#pragma once

#include <stdexcept>
#include <string>

namespace ae2i {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A scalar or index argument is outside its valid range.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// An object was used in a state that does not permit the call.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared where a finite value is required.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, int epoch = -1)
      : Error(what), epoch_(epoch) {}

  /// Epoch during which the value diverged, or -1 outside training.
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

/// Invalid configuration (unknown keys, bad stage arithmetic, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad input data (e.g. a class id outside the label range).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated binary file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace ae2i
