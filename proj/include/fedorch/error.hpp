#pragma once

#include <stdexcept>
#include <string>

namespace fedorch {

// Caller handed us something that violates an operation's precondition
// (dimension mismatch, empty batch, nonpositive weight, bad CSV cell, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation invoked in a controller phase that does not permit it.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Unrecoverable failure while a federation is running (learner error,
// disconnect, non-finite loss). Aborts the run.
class RunAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedorch
