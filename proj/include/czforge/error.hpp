#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace czforge {

/// Bad parameters or arguments supplied by the caller.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data that does not conform to its declared format.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A DataError tied to a line of a text input. The message ends with ", line N".
class ParseError : public DataError {
 public:
  ParseError(const std::string& cause, std::size_t line)
      : DataError(cause + ", line " + std::to_string(line)), cause_(cause), line_(line) {}

  const std::string& cause() const noexcept { return cause_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string cause_;
  std::size_t line_;
};

/// Filesystem or codec failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace czforge
