#pragma once

#include <stdexcept>
#include <string>

namespace dceus {

/// Base of every error raised by the toolkit. The CLI maps each subclass to a
/// distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched dims/spacing/origin between objects that must share a grid.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures (missing file, short read, failed write).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported container contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or argument.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Degenerate numerical input: constant images, empty masks, coplanar
/// correspondences, singular transforms.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// No post-injection frame could be located in a cine.
class StartDetectionError : public Error {
 public:
  using Error::Error;
};

/// Evaluation request that does not fit the data (frame range outside the
/// cine, too few samples for a fit).
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace dceus
