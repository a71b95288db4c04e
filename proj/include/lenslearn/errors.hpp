#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lenslearn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents disagree with what an operation requires.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid user configuration (exit code 2 at the command line).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Data outside its documented domain (exit code 3).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed file. offset is the byte position where parsing stopped (exit code 3).
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& source, std::uint64_t offset, const std::string& what)
      : ValidationError(source + " at byte " + std::to_string(offset) + ": " + what),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

// NaN/Inf produced during training (exit code 4).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace lenslearn
