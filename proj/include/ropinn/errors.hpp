#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ropinn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed graph or call: unknown node id, shape mismatch, wrong arity.
class StructuralError : public Error {
public:
  using Error::Error;
};

class DimensionError : public StructuralError {
public:
  using StructuralError::StructuralError;
};

/// A NaN or infinity showed up while evaluating or differentiating.
class NumericError : public Error {
public:
  NumericError(std::size_t node, const std::string& what)
      : Error(what + " (node " + std::to_string(node) + ")"), node_(node) {}

  std::size_t node() const noexcept { return node_; }

private:
  std::size_t node_;
};

/// Requested feature is not supported by this build or this operation.
class CapabilityError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

/// Metric denominators vanish (reference solution identically zero).
class DegenerateReferenceError : public Error {
public:
  using Error::Error;
};

/// Test oracle asked to do more work than it is meant for.
class GuardError : public Error {
public:
  using Error::Error;
};

} // namespace ropinn
