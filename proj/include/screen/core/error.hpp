#pragma once

#include <stdexcept>
#include <string>

namespace screen {

/// Base error for all failures raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when user-supplied input (config values, arguments, file contents)
/// violates a documented precondition. The CLI maps it to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

[[noreturn]] inline void fail(const std::string& message) { throw Error(message); }

[[noreturn]] inline void invalid(const std::string& message) {
  throw ValidationError(message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) invalid(message);
}

}  // namespace screen
