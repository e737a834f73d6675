#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mgcp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents do not conform (mode out of range, wrong matrix size, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument value that is not a dimension problem.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An iterate became degenerate: a zero factor column or an all-zero factor
/// matrix. Raised instead of silently re-randomizing.
class DegenerateIterate : public Error {
 public:
  using Error::Error;
};

/// Cholesky breakdown of P^T P, i.e. an interpolation operator without full
/// column rank.
class RankDeficient : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries 1-based line and column of the offending token.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, std::size_t column, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + what),
        file_(std::move(file)),
        line_(line),
        column_(column) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::string file_;
  std::size_t line_;
  std::size_t column_;
};

}  // namespace mgcp
