#pragma once

#include <stdexcept>
#include <string>

namespace synood {

// Bad arguments, malformed configs, contract violations detected up front.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem and decoding failures.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation invoked on an object in the wrong lifecycle state
// (e.g. scoring with an untrained model, deciding with uncalibrated thresholds).
class StateError : public std::runtime_error {
 public:
  explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values encountered during numeric computation.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace synood
