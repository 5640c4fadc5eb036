// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace brainstack {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or rank mismatch between tensors participating in one operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value, bad CLI usage, impossible split request.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed file content: bad magic, truncation, duplicate names, etc.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Non-finite value where a finite one is required, undefined statistic.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Operation invoked in an invalid order (e.g. repeated backward pass).
class StateError : public Error {
 public:
  using Error::Error;
};

// A reference-value check could not be carried out, e.g. the probed function
// is not deterministic.
class OracleError : public Error {
 public:
  using Error::Error;
};

}  // namespace brainstack
