#pragma once

#include <stdexcept>
#include <string>

namespace ticl {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes that do not conform to an operation's shape rule.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced by an operation on finite inputs.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unusable input data (files, tables, records).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Binary or text payload failed an integrity check.
class ChecksumError : public Error {
 public:
  using Error::Error;
};

/// File format violations: bad magic, unsupported version, truncation.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// An episode could not be built from the sampled rows; the caller retries
/// with a fresh random stream.
class EpisodeRejected : public Error {
 public:
  using Error::Error;
};

}  // namespace ticl
