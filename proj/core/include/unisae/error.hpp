#pragma once

#include <stdexcept>
#include <string>

namespace unisae {

// Caller supplied something unusable: bad shapes, out-of-range settings,
// malformed files. The CLI maps these to exit code 1.
class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public UserError {
 public:
  explicit DimensionError(const std::string& what)
      : UserError("dimension mismatch: " + what) {}
};

class InvalidArgument : public UserError {
 public:
  using UserError::UserError;
};

enum class FormatErrorKind { kIo, kBadMagic, kVersionMismatch, kTruncated, kMalformed };

class FormatError : public UserError {
 public:
  FormatError(FormatErrorKind kind, const std::string& what);
  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

// Training produced a non-finite value; internal failure, exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace unisae
