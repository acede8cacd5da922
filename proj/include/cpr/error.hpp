#pragma once

#include <stdexcept>
#include <string>

namespace cpr {

/// Bad argument to a library call (wrong length, non-finite value, empty set, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A parameter combination that violates a model precondition, e.g. an
/// interaction radius that breaks the minimal-image convention.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A graph with a node of zero degree, or a k-NN graph with a zero k-distance.
class DegenerateGraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A user callback broke a promise it made (e.g. rho(x) > rho_max).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Iterative solver hit its iteration cap.
class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, double residual)
      : std::runtime_error(what + " (last residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// PDE coefficients outside the well-posed regime (eta * gamma_eps >= 1).
class RegimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration the library deliberately does not support.
class UnsupportedConfiguration : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cpr
