#pragma once

#include <stdexcept>
#include <string>

namespace hdgcn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or channel counts that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values (kernel sizes, neighbor counts, strides...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data, files or labels.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A skeleton graph that violates the tree invariants.
class TopologyError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during optimization or failed numerical checks.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Broken internal invariant; indicates a bug rather than bad input.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace hdgcn
