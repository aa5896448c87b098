#pragma once

#include <stdexcept>
#include <string>

namespace gflow {

/// Precondition violations: bad shapes, out-of-range indices, infeasible input.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The instance exceeds a solver's size guard.
class SizeLimitExceeded : public std::length_error {
public:
    using std::length_error::length_error;
};

/// Floating-point range exhausted (e.g. a bridge normalizer underflowed).
class NumericalBreakdown : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gflow
