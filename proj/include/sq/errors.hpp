#ifndef SQ_ERRORS_HPP_
#define SQ_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace sq {

// Base of all library errors; every subclass maps to one CLI exit code.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor rank/extent mismatch.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what) {}
};

// Invalid argument value (empty vector, out-of-range iteration, ...).
class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(what) {}
};

// Operation called in an invalid order (backward before forward, ...).
class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(what) {}
};

// Unrecognized magic bytes or unsupported version in a binary file.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(what) {}
};

// File recognized but internally inconsistent (truncated, bad counts).
class CorruptionError : public Error {
 public:
  explicit CorruptionError(const std::string& what) : Error(what) {}
};

// Bad key or value in a run configuration.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// Filesystem-level failure (missing dataset, unwritable output).
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

// Training produced a non-finite loss; trainer state is left untouched.
class DivergedError : public Error {
 public:
  explicit DivergedError(const std::string& what) : Error(what) {}
};

}  // namespace sq

#endif  // SQ_ERRORS_HPP_
