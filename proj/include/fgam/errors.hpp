#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fgam {

/// Base class of every error raised by the library. The C API maps each
/// subclass onto one status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument value (K too small, alpha outside (0,1), lambda <= 0 ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Mismatched matrix or vector dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Evaluation point outside a basis domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Design too large to build.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (CSV files, curves).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public DataError {
 public:
  using DataError::DataError;
};

/// Numerical breakdown: singular systems, rank deficiency beyond expectation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Design in which the tested random effect is not identifiable
/// (e.g. Z lies in the column span of X).
class DegenerateDesignError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Optimizer did not converge.
class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Study or CLI configuration problems. Carries every violation found.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : Error(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid configuration:";
    for (const auto& s : v) out += "\n  - " + s;
    return out;
  }
  std::vector<std::string> violations_;
};

}  // namespace fgam
