#pragma once

#include <stdexcept>
#include <string>

namespace stiffinfer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document. Carries the 1-based line (0 if unknown) and the
/// offending field path.
class ParseError : public Error {
public:
  ParseError(const std::string& what, int line = 0, std::string field = {})
      : Error(format(what, line, field)), line_(line), field_(std::move(field)) {}

  int line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

private:
  static std::string format(const std::string& what, int line, const std::string& field) {
    std::string msg = "parse error";
    if (line > 0) msg += " at line " + std::to_string(line);
    if (!field.empty()) msg += " (" + field + ")";
    return msg + ": " + what;
  }

  int line_;
  std::string field_;
};

/// Well-formed input that violates a model invariant.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Failures of numerical procedures: non-convergence, singular systems,
/// non-finite values.
class NumericalError : public Error {
public:
  using Error::Error;
};

} // namespace stiffinfer
