#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace protoset {

// Base of every error raised by the library. The CLI maps all subclasses
// except NumericError to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed input; `record()` is the 1-based line number of the failing record.
class ParseError : public Error {
 public:
  ParseError(std::size_t record, const std::string& what)
      : Error("record " + std::to_string(record) + ": " + what), record_(record) {}

  std::size_t record() const noexcept { return record_; }

 private:
  std::size_t record_;
};

// Non-finite loss during training; the message names the offending term.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace protoset
