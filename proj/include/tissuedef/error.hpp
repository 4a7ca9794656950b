#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tissuedef {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not satisfy an operation's arity rules.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument violates a documented precondition.
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration (CLI exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered during optimisation (CLI exit code 2).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (CLI exit code 3).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents. `line` is 1-based, 0 when not applicable.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace tissuedef
