#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gfen {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file layout (ragged rows, empty table, missing file).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A cell that could not be read as a finite number.
class ParseError : public FormatError {
 public:
  ParseError(std::size_t row, std::size_t col, const std::string& cell)
      : FormatError("cannot parse '" + cell + "' at (" + std::to_string(row) + "," +
                    std::to_string(col) + ")"),
        row_(row),
        col_(col) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Zero-variance series, constant scale range and similar degenerate inputs.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class NoPeriodError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch)
      : Error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
              std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

/// Checkpoint does not fit the data it is applied to.
class CheckpointMismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace gfen
