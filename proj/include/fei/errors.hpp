#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fei {

/// Invalid or out-of-range configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Data handed to an operation violates its preconditions (shape, finiteness).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical iteration produced non-finite values (CLI exit code 3).
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

/// Iterative linear solve stopped before reaching its tolerance.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what + " (relative residual " + std::to_string(residual) + ")"),
        residual_(residual) {}

  double residual() const { return residual_; }

 private:
  double residual_;
};

/// File could not be read or decoded (weights, checkpoints, arrays).
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset ingestion failed; message lists the offending paths.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An optional external component (e.g. a denoiser plugin) is not installed.
class PluginUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Internal bookkeeping invariant was broken.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace fei
