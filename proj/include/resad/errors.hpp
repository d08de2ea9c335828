#pragma once

#include <stdexcept>
#include <string>

namespace resad {

// Base of every error raised by the library. The CLI maps the concrete
// kinds onto exit codes (IoError -> 2, everything else -> 1).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform to an op's contraction/broadcast rule.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Argument outside a function's mathematical domain (log of a non-positive, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A statistic is undefined for the given sample (zero variance, single class).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace resad
