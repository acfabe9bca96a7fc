#pragma once

#include <stdexcept>
#include <string>

namespace chanmt {

/// Base class of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition or postcondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise unusable numeric input.
class NumericInputError : public Error {
 public:
  using Error::Error;
};

/// A sequence or batch does not fit a fixed capacity (positions, token budget).
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Corrupt, truncated, or incompatible persisted artifact.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or otherwise failed to produce a usable model.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace chanmt
