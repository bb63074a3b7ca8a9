#pragma once

#include <stdexcept>
#include <string>

namespace pkgcn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied values out of range (labels, indices).
class InputError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters, presets or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary or text file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Object used in a state that does not permit the call (stale caches).
class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace pkgcn
