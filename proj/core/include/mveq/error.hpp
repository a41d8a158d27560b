#pragma once

#include <stdexcept>
#include <string>

namespace mveq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad grid parameters, shape mismatches, unsupported mode.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A market hypothesis does not hold (sigma^2 >= delta, gamma1 * gamma2 == 0).
class HypothesisViolation : public Error {
 public:
  using Error::Error;
};

/// A solver precondition fails (e.g. state-dependent case with random r).
class PreconditionFailure : public Error {
 public:
  using Error::Error;
};

/// The time step is too coarse for a one-step factor to stay positive.
class StepSizeError : public Error {
 public:
  using Error::Error;
};

/// A quantity that must stay positive (P1, the first-order gain) did not.
class PositivityFailure : public Error {
 public:
  using Error::Error;
};

/// Division by a vanishing process value.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Scenario file could not be parsed; the message starts with the key path.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace mveq
