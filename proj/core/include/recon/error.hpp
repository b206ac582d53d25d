#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace recon {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model, assignment, or domain violates a structural invariant.
class InvalidModel : public Error {
 public:
  using Error::Error;
};

/// Bad user-supplied configuration (flags, config files, layouts).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file could not be parsed. Carries the offending line (1-based, 0 if unknown)
/// and field when they are known.
class ParseError : public ConfigError {
 public:
  ParseError(const std::string& what, std::size_t line = 0, std::string field = {})
      : ConfigError(format(what, line, field)), line_(line), field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  static std::string format(const std::string& what, std::size_t line,
                            const std::string& field) {
    std::string out = what;
    if (line != 0) out += " (line " + std::to_string(line) + ")";
    if (!field.empty()) out += " [field '" + field + "']";
    return out;
  }

  std::size_t line_;
  std::string field_;
};

/// A persisted file declares a schema version this build cannot read.
class VersionMismatch : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Value iteration hit max_iter before the Bellman residual fell below tol.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// An enumeration would exceed its configured budget.
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

/// A feature row, tree, or file does not match the expected feature schema.
class SchemaMismatch : public Error {
 public:
  using Error::Error;
};

class UnknownParam : public Error {
 public:
  using Error::Error;
};

/// Two messages communicate different values for the same parameter.
class ConflictingMessages : public Error {
 public:
  using Error::Error;
};

}  // namespace recon
