#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace blowup {

// Bad caller input: dimensions, indices, argument ranges.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite or otherwise unusable numeric data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rejected run configuration (overlapping patches, bad scale grid, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Evaluation outside the domain a field is defined on.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation that only makes sense for one field mode.
class ModeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated internal invariant (singular Gram matrix, broken bookkeeping).
class InternalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Iterative solver did not reach its tolerance; keeps the residual trail
// so callers can see how the iteration behaved.
class SolverFailure : public std::runtime_error {
 public:
  SolverFailure(const std::string& what, std::vector<double> residual_history)
      : std::runtime_error(what), history_(std::move(residual_history)) {}

  const std::vector<double>& residual_history() const { return history_; }

 private:
  std::vector<double> history_;
};

}  // namespace blowup
