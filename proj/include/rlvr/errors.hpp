#pragma once

#include <stdexcept>
#include <string>

namespace rlvr {

// Bad input: a spec, config, prompt or sequence that violates its invariants.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Requested exact enumeration would exceed kMaxEnumeration sequences.
class EnumerationBoundError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Non-finite loss, gradient or parameter encountered during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rlvr
