#pragma once

#include <stdexcept>
#include <string>

namespace graphife {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible operand shapes or out-of-range indices.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A primitive produced (or was handed) NaN/Inf, or a numeric precondition failed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the differentiation tape (backward twice, non-scalar loss, ...).
class TapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed input files or schema violations.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid user configuration (ranges, unknown names, infeasible splits).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace graphife
