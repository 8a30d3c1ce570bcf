#pragma once

#include <stdexcept>
#include <string>

namespace mogel {

/// Parameter outside the domain of a density or moment (e.g. alpha <= 1).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Shapes of batched inputs disagree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A loss or gradient evaluated to a non-finite value.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& head, const std::string& what)
      : std::runtime_error(what), head_(head) {}

  const std::string& head() const noexcept { return head_; }

 private:
  std::string head_;
};

/// Quadrature box does not hold enough prior mass.
class CoverageError : public std::runtime_error {
 public:
  CoverageError(double mass, const std::string& what)
      : std::runtime_error(what), mass_(mass) {}

  double measured_mass() const noexcept { return mass_; }

 private:
  double mass_;
};

/// Input data could not be read or parsed.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Requested column/field does not exist.
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

/// Invalid configuration value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace mogel
