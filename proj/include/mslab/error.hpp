#pragma once

#include <stdexcept>
#include <string>

namespace mslab {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation was called outside its documented preconditions.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A linear solve, projection or reconstruction could not reach its tolerance.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent configuration / input file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

}  // namespace detail

}  // namespace mslab
