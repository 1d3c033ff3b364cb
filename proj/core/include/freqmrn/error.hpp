#pragma once

#include <stdexcept>
#include <string>

namespace freqmrn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or channel counts.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters, switches or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Index outside a valid range (frames, chain positions).
class BoundsError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the autodiff tape (detached loss, double backward).
class TapeError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked on state that was never initialized.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed file carrying unusable values (NaN coordinates, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Pose data bound to a different skeleton than expected.
class SkeletonError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or could not proceed.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace freqmrn
