#pragma once

#include <stdexcept>
#include <string>

namespace overopt {

/// Base class for all library errors. `exit_code()` maps onto the CLI
/// contract: 2 usage/config, 3 incomplete input, 4 numerical failure.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual int exit_code() const { return 2; }
};

/// Malformed or out-of-range configuration. Carries the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Operation called in a state where it is not meaningful.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Input exceeds what exact combinatorics or memory can handle.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Random generation could not satisfy its constraints.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Required input files or sweep cells are missing.
class IncompleteInputError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

/// Non-finite values, failed convergence, unidentifiable parameters.
class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

/// Least-squares design problems: rank deficiency, unbracketed searches.
class FitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace overopt
