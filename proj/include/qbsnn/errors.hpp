#pragma once

#include <stdexcept>
#include <string>

namespace qbsnn {

// Error taxonomy used across the library. The CLI maps each class to a
// distinct exit code (see tools/main.cpp and README).

/// Bad experiment configuration: unknown key, invalid value, missing file.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shape / dimension mismatch between operands.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed on-disk artifact: bad magic, version, checksum, truncation.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Quantization scale outside its valid domain (gamma must be > 0).
class InvalidScaleError : public std::runtime_error {
 public:
  explicit InvalidScaleError(const std::string& msg)
      : std::runtime_error(msg) {}
};

/// NaN or infinity reached a membrane potential or gradient.
class NumericFault : public std::runtime_error {
 public:
  explicit NumericFault(const std::string& msg) : std::runtime_error(msg) {}
};

/// Internal invariant broken (e.g. integer activation out of range at
/// inference). Always a bug or a corrupted model, never user input.
class InvariantViolation : public std::logic_error {
 public:
  explicit InvariantViolation(const std::string& msg)
      : std::logic_error(msg) {}
};

}  // namespace qbsnn
