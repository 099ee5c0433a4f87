#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace collab {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration and shape errors (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DegenerateObjectiveError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DependencyError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class UnsupportedMetricError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class IncompleteBroadcastError : public Error {
 public:
  using Error::Error;
};

class RoutingError : public Error {
 public:
  using Error::Error;
};

// Numerical failures (CLI exit code 3).
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Local fit did not reach the gradient tolerance; carries the final ‖∇L‖∞.
class FitError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
  double gradient_norm() const noexcept { return residual(); }
};

class TrainingError : public ConvergenceError {
 public:
  TrainingError(const std::string& what, std::size_t epoch)
      : ConvergenceError(what, 0.0), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class ExperimentError : public Error {
 public:
  ExperimentError(const std::string& what, std::size_t round)
      : Error(what), round_(round) {}
  std::size_t round() const noexcept { return round_; }

 private:
  std::size_t round_;
};

// File and wire errors (CLI exit code 4).
class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public IoError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : IoError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public IoError {
 public:
  using IoError::IoError;
};

class EmptyDatasetError : public IoError {
 public:
  using IoError::IoError;
};

class DecodeError : public IoError {
 public:
  using IoError::IoError;
};

class BadMagicError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

class BadVersionError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

class BadLengthError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

class BadChecksumError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

}  // namespace collab
