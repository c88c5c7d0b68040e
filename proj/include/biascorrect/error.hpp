#pragma once

#include <stdexcept>
#include <string>

namespace biascorrect {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File missing, unreadable or unwritable.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed input: bad header, size mismatch, inconsistent dims, invalid
/// parameter values.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Input is well formed but carries too little information for the requested
/// operation (flat histogram, empty foreground).
class DegenerateError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace biascorrect
