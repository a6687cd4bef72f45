#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mvam {

// Base of every error thrown by the library. The subclasses map onto the
// CLI's exit codes: ConfigError -> 2, DataError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes; the message names both operands' shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data. `line()` is 1-based, 0 when the
// error is not tied to a line of a file.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A metric that is undefined for the given predictions, e.g. AUC without
// any negative example.
class MetricError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite losses or gradients, failed gradient checks.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvam
