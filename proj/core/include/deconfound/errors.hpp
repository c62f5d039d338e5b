#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace deconfound {

/// Base class for every error raised by the library. Index and domain
/// violations use std::out_of_range / std::domain_error instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input failed a documented invariant (scenario, plan, basis, grid...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class EmptyData : public Error {
 public:
  using Error::Error;
};

/// Least-squares design does not have full column rank.
class RankDeficient : public Error {
 public:
  RankDeficient(std::size_t rank, std::size_t columns)
      : Error("rank-deficient design: rank " + std::to_string(rank) + " < " +
              std::to_string(columns) + " columns"),
        rank_(rank),
        columns_(columns) {}

  std::size_t rank() const noexcept { return rank_; }
  std::size_t columns() const noexcept { return columns_; }

 private:
  std::size_t rank_;
  std::size_t columns_;
};

/// A treatment arm has fewer rows than the basis dimension.
class InsufficientArm : public Error {
 public:
  using Error::Error;
};

/// Fewer observations than parameters to estimate.
class Underdetermined : public Error {
 public:
  using Error::Error;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// Malformed CSV/JSON input. Row and column are 1-based; 0 means unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row = 0, std::size_t column = 0)
      : Error(format(what, row, column)), row_(row), column_(column) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t row, std::size_t column) {
    if (row == 0) return what;
    std::string out = what + " (row " + std::to_string(row);
    if (column != 0) out += ", column " + std::to_string(column);
    return out + ")";
  }

  std::size_t row_;
  std::size_t column_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace deconfound
