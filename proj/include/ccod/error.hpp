#pragma once

#include <stdexcept>
#include <string>

namespace ccod {

/// Invalid configuration (empty topology, bad normalizer, missing table entry).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside its mathematical domain (cw < 1, n < 1, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Caller broke an interface precondition (shape mismatch, missing cache).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Fixed-point iteration did not converge.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Non-finite loss or gradient during a training step.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ccod
