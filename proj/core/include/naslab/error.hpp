#pragma once

#include <stdexcept>
#include <string>

namespace naslab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad shapes, out-of-range hyperparameters, inconsistent specs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid data values: non-finite activations, labels out of range.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Operation called in the wrong state, e.g. backward before forward.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// NAS is undefined for the given input (fewer than two channels).
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures. The message always names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Not enough records to answer the question asked.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// History grids that cannot be aligned epoch by epoch.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

}  // namespace naslab
