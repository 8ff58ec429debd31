#pragma once

#include <stdexcept>
#include <string>

namespace multipofo {

// Every failure raised by the library derives from Error so callers can
// catch broadly; the CLI maps ConfigError to exit code 2 and everything
// else to 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension mismatch between two operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Operation called in the wrong lifecycle state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Malformed input text (CSV rows, timestamps).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a data invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent run configuration, including missing input files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Corrupt or version-mismatched checkpoint.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A documented precondition between pipeline stages was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace multipofo
