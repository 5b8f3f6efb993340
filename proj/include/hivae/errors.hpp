#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hivae {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent input data (files, cells, masks, schema mismatches).
class DataError : public Error {
 public:
  using Error::Error;
  DataError(const std::string& what, std::size_t row, std::size_t col)
      : Error(what + " (row " + std::to_string(row + 1) + ", column " +
              std::to_string(col + 1) + ")"),
        row_(row),
        col_(col),
        located_(true) {}

  bool located() const { return located_; }
  std::size_t row() const { return row_; }
  std::size_t col() const { return col_; }

 private:
  std::size_t row_ = 0;
  std::size_t col_ = 0;
  bool located_ = false;
};

/// Invalid configuration or argument combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Value outside the support of a distribution.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Model file that cannot be read: bad version, truncated, malformed.
class ModelFormatError : public Error {
 public:
  using Error::Error;
};

/// Model schema fingerprint does not match the dataset schema.
class FingerprintError : public DataError {
 public:
  using DataError::DataError;
};

/// Metric that is undefined for the given column (e.g. zero-range NRMSE).
class UndefinedMetricError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace hivae
