#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace strataclip {

enum class ErrorCode {
  invalid_argument = 1,  // precondition / validation failure
  parse = 2,             // malformed input document
  runtime = 3,           // exhaustion, divergence, I/O
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ErrorCode::invalid_argument, what) {}
};

/// Parse failure in a line-oriented input; `line` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorCode::parse, "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class RuntimeError : public Error {
 public:
  explicit RuntimeError(const std::string& what)
      : Error(ErrorCode::runtime, what) {}
};

}  // namespace strataclip
