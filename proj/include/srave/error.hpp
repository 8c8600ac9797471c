#pragma once

#include <stdexcept>
#include <string>

namespace srave {

/// Bad caller-supplied data: shapes, sample rates, alignment, ranges.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Weights, configs and containers that cannot be used.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An internal invariant was violated (non-finite output, broken identity).
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace srave
