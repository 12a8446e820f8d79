#pragma once

#include <stdexcept>
#include <string>

namespace obnc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// d < K where a simplex ETF is required (or d <= K where d > K is).
class InfeasibleDimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite input or an arithmetic breakdown.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Retraction hit a column of (near) zero norm.
class DegenerateRetractionError : public Error {
 public:
  using Error::Error;
};

/// Label layout cannot support the requested loss (e.g. SC with n = 1).
class InvalidLayoutError : public Error {
 public:
  using Error::Error;
};

/// A direction handed to a Hessian routine is not tangent.
class InvalidDirectionError : public Error {
 public:
  using Error::Error;
};

/// Operation not defined for this loss (alpha/beta under SC, Hessian under focal).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Saddle construction was asked for the wrong case.
class WrongCaseError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// The state is globally optimal; there is no escape direction.
class NoEscapeError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// tau >= tau_bound and the constructed direction failed to be negative.
class HypothesisViolatedError : public Error {
 public:
  using Error::Error;
};

/// Trust-region model operator failed its symmetry self-check.
class InternalConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Malformed config or state file. Carries a location for diagnostics.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column,
             std::size_t byte_offset)
      : Error(what), line_(line), column_(column), offset_(byte_offset) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }
  std::size_t byte_offset() const { return offset_; }

 private:
  std::size_t line_;
  std::size_t column_;
  std::size_t offset_;
};

}  // namespace obnc
