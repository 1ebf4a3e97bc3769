#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dldmd {

// Invalid arguments (dimension mismatches, bad parameters) are reported with
// std::invalid_argument. Everything below is a runtime failure.

/// Numerical breakdown: non-finite values, non-convergence, singular systems.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A trajectory left the blow-up box during integration.
class DivergenceError : public NumericError {
public:
  DivergenceError(const std::string& what, std::size_t step)
      : NumericError(what), step_(step) {}
  std::size_t step() const { return step_; }

private:
  std::size_t step_;
};

/// Rejection sampling could not produce an admissible initial condition.
class SamplingError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace dldmd
