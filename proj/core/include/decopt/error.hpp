#pragma once

#include <stdexcept>
#include <string>

namespace decopt {

/// Base class for all errors raised by the library. Precondition failures on
/// caller input use std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A random graph family failed to produce a connected instance.
class GenerationError : public Error {
 public:
  GenerationError(const std::string& what, int attempts)
      : Error(what), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

/// Floating-point state left the range where the iteration is meaningful
/// (e.g. push-sum mass underflow).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace decopt
