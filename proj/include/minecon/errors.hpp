#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace minecon {

// Base class for every error raised by the library. The CLI maps these to
// exit status 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vector/matrix lengths disagree with the model they are evaluated against.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An argument lies outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// The participation constraint c_i < c* fails for some miners.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, std::vector<std::size_t> miners)
      : Error(what), violating_(std::move(miners)) {}
  const std::vector<std::size_t>& violating_miners() const { return violating_; }

 private:
  std::vector<std::size_t> violating_;
};

// A ratio or state is numerically undefined (zero own loss, zero totals).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or invalid input data. `line` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace minecon
