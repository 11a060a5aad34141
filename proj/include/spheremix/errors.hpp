#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spheremix {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Violated structural constraint (e.g. log-spectrum not summing to zero).
class ConstraintError : public Error {
 public:
  using Error::Error;
};

/// Row that cannot be normalized or a subspace of insufficient rank.
class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& what, std::size_t row = npos)
      : Error(what), row_(row) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Non-finite density or likelihood at a given observation.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, std::size_t point)
      : Error(what + " (observation " + std::to_string(point) + ")"), point_(point) {}

  std::size_t point() const noexcept { return point_; }

 private:
  std::size_t point_;
};

/// Every start (or every K) of a fit failed.
class FitError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace spheremix
