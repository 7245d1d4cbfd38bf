#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spinsq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Spin count outside N >= 1.
class InvalidSystemError : public Error {
 public:
  using Error::Error;
};

/// Operands of mismatched dimension.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition on an operand failed (e.g. an operator expected to be Hermitian is not).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Out-of-domain physical or numerical parameters.
class ParameterError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure could not reach its accuracy target.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Mean spin too short to define a direction.
class DegenerateDirectionError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Norm drift of a stepped propagation exceeded its budget.
class IntegratorError : public NumericError {
 public:
  IntegratorError(const std::string& what, std::size_t trajectory)
      : NumericError(what), trajectory_(trajectory) {}

  /// Index of the failing trajectory inside an ensemble (0 for single runs).
  std::size_t trajectory() const noexcept { return trajectory_; }

 private:
  std::size_t trajectory_;
};

/// Malformed configuration or command-line usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace spinsq
