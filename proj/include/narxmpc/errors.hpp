#pragma once

#include <stdexcept>
#include <string>

namespace narxmpc {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A vector or sequence has the wrong size. `argument()` names the offender.
class DimensionError : public Error {
 public:
  DimensionError(std::string argument, const std::string& what)
      : Error(argument + ": " + what), argument_(std::move(argument)) {}
  const std::string& argument() const noexcept { return argument_; }

 private:
  std::string argument_;
};

// Evaluating a dynamics map failed (e.g. the plant left its validity region).
class DynamicsError : public Error {
 public:
  explicit DynamicsError(const std::string& what, int step = -1)
      : Error(step >= 0 ? "step " + std::to_string(step) + ": " + what : what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

// Cholesky factorization of the kernel matrix broke down.
class FactorizationError : public Error {
 public:
  FactorizationError(const std::string& what, double smallest_pivot)
      : Error(what), smallest_pivot_(smallest_pivot) {}
  double smallest_pivot() const noexcept { return smallest_pivot_; }

 private:
  double smallest_pivot_;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Reading or writing a file failed, or its contents are malformed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace narxmpc
