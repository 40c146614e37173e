#pragma once

#include <stdexcept>
#include <string>

namespace nl2lf {

// Base of every error thrown by the toolkit. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or unparsable input file.
class LoadError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a data invariant (missing field, empty text, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Caller passed an argument outside the operation's domain.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf or other numerical breakdown.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Checkpoint file is corrupt or incompatible with the caller's state.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Bad command line or configuration file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace nl2lf
