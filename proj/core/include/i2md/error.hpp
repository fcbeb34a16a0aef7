#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace i2md {

/// Tensor extents do not line up for the requested operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A documented precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Input is numerically degenerate (e.g. normalizing a zero vector).
class DegenerateInputError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A loss component or tensor became NaN/Inf. Carries the component name.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::string component, const std::string& message)
      : std::runtime_error(message), component_(std::move(component)) {}

  const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace i2md
