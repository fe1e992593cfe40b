#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rgd {

/// Shapes of two operands do not conform.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation was asked for a value outside its mathematical domain
/// (empty reductions, out-of-range histogram entries, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid user-supplied configuration: non-positive radius, empty grid, etc.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf appeared during an iterative computation.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Malformed binary input. `offset` is the byte position where parsing failed.
class ParseError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, Truncated, DimensionOverflow, BadVersion, Malformed };

  ParseError(Kind kind, std::size_t offset, const std::string& what)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)),
        kind_(kind),
        offset_(offset) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

}  // namespace rgd
