#pragma once

#include <stdexcept>
#include <string>

namespace rkhs_rl {

// Malformed arguments: non-finite values, empty inputs, dimension mismatch.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An object is not in a state that supports the requested operation.
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A linear system whose condition estimate exceeds the configured guard.
class SingularSystem : public std::runtime_error {
 public:
  SingularSystem(const std::string& what, double condition)
      : std::runtime_error(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

// Exhaustive enumeration refused because it would exceed a work budget.
class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A filter recursion produced a non-finite value; the trial cannot continue.
class RunAborted : public std::runtime_error {
 public:
  RunAborted(const std::string& what, long iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

}  // namespace rkhs_rl
