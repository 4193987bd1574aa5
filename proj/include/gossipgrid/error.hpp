#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gossipgrid {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Requested (n, d) or similar parameters admit no valid object.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// A randomized construction gave up after its retry bound.
class GenerationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  /// 1-based line number, 0 when not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A configuration field failed validation. `field()` names it.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A model went non-finite during simulation.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t round, std::size_t node)
      : Error("non-finite model at round " + std::to_string(round) + " (node " +
              std::to_string(node) + ")"),
        round_(round) {}
  std::size_t round() const noexcept { return round_; }

 private:
  std::size_t round_;
};

}  // namespace gossipgrid
