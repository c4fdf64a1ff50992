#pragma once

#include <stdexcept>
#include <string>

namespace tebfar {

// Every library failure derives from Error. The category decides the CLI exit
// code: usage problems exit 1, data problems exit 2, numeric failures exit 3.
enum class ErrorCategory { Usage, Data, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class NotPositiveDefinite : public Error {
 public:
  explicit NotPositiveDefinite(const std::string& what)
      : Error(ErrorCategory::Numeric, "not positive definite: " + what) {}
};

class RankDeficient : public Error {
 public:
  explicit RankDeficient(const std::string& what)
      : Error(ErrorCategory::Numeric, "rank deficient: " + what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::Numeric, what) {}
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& what)
      : Error(ErrorCategory::Data, "dimension mismatch: " + what) {}
};

class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what) : Error(ErrorCategory::Data, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorCategory::Usage, "invalid configuration: " + what) {}
};

class MissingColumn : public Error {
 public:
  explicit MissingColumn(const std::string& column)
      : Error(ErrorCategory::Data, "missing column '" + column + "'"), column_(column) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::string column, const std::string& token)
      : Error(ErrorCategory::Data, "cannot parse '" + token + "' at data row " +
                                       std::to_string(row) + ", column '" + column + "'"),
        row_(row),
        column_(std::move(column)) {}
  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

class EmptyAfterFiltering : public Error {
 public:
  explicit EmptyAfterFiltering(const std::string& what)
      : Error(ErrorCategory::Data, "no rows left after filtering: " + what) {}
};

class ZeroVariance : public Error {
 public:
  explicit ZeroVariance(const std::string& column)
      : Error(ErrorCategory::Data, "zero variance in column '" + column + "'"), column_(column) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::Data, what) {}
};

}  // namespace tebfar
