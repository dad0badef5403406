#pragma once

#include <stdexcept>
#include <string>

namespace madeasd {

/// Bad input: malformed files, out-of-range arguments, inconsistent shapes.
/// The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure while computing: non-finite losses, I/O errors mid-run, fold failures.
/// The CLI maps this to exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class IoError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace madeasd
