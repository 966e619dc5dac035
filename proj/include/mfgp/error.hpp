#pragma once

#include <stdexcept>
#include <string>

namespace mfgp {

enum class ErrorCode {
  kInvalidArgument = 1,
  kNumericalFailure = 2,
  kDomainError = 3,
  kParseError = 4,
  kSchemaError = 5,
  kIoError = 6,
  kStateError = 7,
};

const char* to_string(ErrorCode code);

// Base of every exception thrown by the library. The C API maps `code()`
// onto its status enum.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what)
      : Error(ErrorCode::kInvalidArgument, what) {}
};

class NumericalFailure : public Error {
 public:
  explicit NumericalFailure(const std::string& what)
      : Error(ErrorCode::kNumericalFailure, what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what)
      : Error(ErrorCode::kDomainError, what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line)
      : Error(ErrorCode::kParseError,
              "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what)
      : Error(ErrorCode::kSchemaError, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::kIoError, what) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& what)
      : Error(ErrorCode::kStateError, what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace mfgp
