#pragma once

#include <stdexcept>
#include <string>

namespace slmfit {

enum class ErrorKind {
  InvalidParameter,
  InvalidInput,
  NumericFailure,
};

/// Base exception for the library. The kind decides the CLI exit code:
/// input and parameter errors map to 2, numeric failures to 3.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidParameter : public Error {
 public:
  explicit InvalidParameter(const std::string& what)
      : Error(ErrorKind::InvalidParameter, what) {}
};

class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what)
      : Error(ErrorKind::InvalidInput, what) {}
};

class NumericFailure : public Error {
 public:
  explicit NumericFailure(const std::string& what)
      : Error(ErrorKind::NumericFailure, what) {}
};

}  // namespace slmfit
