#pragma once

#include <stdexcept>
#include <string>

namespace facile {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes; the message names the op and both shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Input outside the mathematical domain of an op (log of x <= 0, zero-norm normalize, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration. The CLI maps this to exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during optimization.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Linear algebra failure (e.g. a Cholesky factorization that should not fail).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Optimizer step requested past the end of its learning-rate schedule.
class ScheduleExhaustedError : public ContractError {
 public:
  using ContractError::ContractError;
};

// A record whose label byte is outside the class range.
class CorruptRecordError : public FormatError {
 public:
  using FormatError::FormatError;
};

// A meta-task cannot be drawn from the available instances.
class TaskSamplingError : public ContractError {
 public:
  using ContractError::ContractError;
};

}  // namespace facile
