#pragma once

#include <stdexcept>
#include <string>

namespace eclip {

// Shape disagreement between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A value that should be finite was NaN/Inf.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Out-of-domain scalar argument (non-positive temperature, k > N, ...).
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Not enough items to satisfy a request.
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Degenerate input: empty sequence, zero-norm vector, tiny image, one-class task.
struct DegenerateError : std::domain_error {
  using std::domain_error::domain_error;
};

}  // namespace eclip
