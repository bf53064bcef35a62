#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace elmal {

/// Input outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Shapes or indices that do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Configuration or precondition violated by the caller.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed dataset. Carries the 1-based data row numbers that were rejected
/// (the header is row 0); empty when the problem is structural.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::vector<std::size_t> rows = {})
      : std::runtime_error(what), rows_(std::move(rows)) {}

  const std::vector<std::size_t>& rows() const noexcept { return rows_; }

 private:
  std::vector<std::size_t> rows_;
};

/// A training loop produced a non-finite value.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t epoch)
      : std::runtime_error(what), epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace elmal
