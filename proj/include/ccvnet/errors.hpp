#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ccvnet {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Invalid hyperparameter, spec or argument combination.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Input data violates a contract (labels, empty sets, degenerate trials).
class DataError : public Error {
public:
  using Error::Error;
};

/// A file could not be decoded. Carries the path and byte offset of the fault.
class ParseError : public DataError {
public:
  ParseError(std::string path, std::uint64_t offset, const std::string &what)
      : DataError(path + ": byte " + std::to_string(offset) + ": " + what),
        path_(std::move(path)), offset_(offset) {}

  const std::string &path() const noexcept { return path_; }
  std::uint64_t offset() const noexcept { return offset_; }

private:
  std::string path_;
  std::uint64_t offset_;
};

/// NaN/Inf encountered in a loss or gradient.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Operation requires state (trained weights) that is not present.
class StateError : public Error {
public:
  using Error::Error;
};

} // namespace ccvnet
