#pragma once

#include <stdexcept>
#include <string>

namespace twistlab {

// Wrong shape, e.g. kernel_rank of a non-square matrix.
struct dimension_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Input would exceed an exhaustive-computation guard.
struct capacity_error : std::length_error {
    using std::length_error::length_error;
};

// Curve or configuration does not satisfy a mathematical hypothesis.
struct hypothesis_error : std::domain_error {
    using std::domain_error::domain_error;
};

// Argument outside the operation's domain (d = 0, non-squarefree, ...).
struct precondition_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numerical routine gave up before reaching its tolerance.
struct convergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace twistlab
