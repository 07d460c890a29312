#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace bpls {

/// Root of every error this library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Array shapes that do not line up (rows vs. labels, theta vs. columns, ...).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise out-of-domain input values.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Newton iterations ran out before the gradient norm reached tolerance.
class FitError : public Error {
 public:
  FitError(const std::string& what, Eigen::VectorXd last_iterate, double gradient_norm)
      : Error(what), last_iterate_(std::move(last_iterate)), gradient_norm_(gradient_norm) {}

  const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }
  double gradient_norm() const noexcept { return gradient_norm_; }

 private:
  Eigen::VectorXd last_iterate_;
  double gradient_norm_;
};

/// Singular or indefinite matrices where a positive-definite one is required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Unknown criterion kind or inconsistent criterion settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Quadrature grid truncates too much posterior mass.
class PrecisionError : public Error {
 public:
  using Error::Error;
};

/// Importance sampler degenerated (effective sample size too small).
class DiagnosticError : public Error {
 public:
  using Error::Error;
};

/// Trajectory or weight data missing something a consumer needs.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Synthetic generation could not produce a valid split.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// CSV cell could not be parsed; carries 1-based row and 0-based column.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : Error(what), row_(row), column_(column) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

/// CSV schema does not match the file (missing columns, unknown label values).
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Labeled set lacks one of the two classes.
class DegenerateStartError : public Error {
 public:
  DegenerateStartError(const std::string& what, int missing_class)
      : Error(what), missing_class_(missing_class) {}

  int missing_class() const noexcept { return missing_class_; }

 private:
  int missing_class_;
};

}  // namespace bpls
