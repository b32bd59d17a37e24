#pragma once

#include <stdexcept>
#include <string>

namespace pluralis {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on a domain object or operation argument was violated.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A modelling assumption (outside domination, positive bargaining gains)
/// does not hold for the supplied inputs.
class AssumptionViolation : public Error {
 public:
  using Error::Error;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// The exact finite-K convolution would exceed its state budget; the caller
/// should fall back to the Monte-Carlo estimator.
class StateCapExceeded : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration does not match its schema.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace pluralis
