#pragma once

#include <stdexcept>
#include <string>

namespace barylab {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input values outside the mathematical domain (negative mass, zero entries
// where positivity is required, non-symmetric costs, bad parameters).
struct DomainError : Error {
    using Error::Error;
};

// Mismatched vector/matrix shapes between related arguments.
struct DimensionError : Error {
    using Error::Error;
};

// Malformed input files (CSV, PGM, edge lists, CLI specs).
struct ParseError : Error {
    using Error::Error;
};

// An iterative routine failed to reach its tolerance within its budget.
struct NonConvergence : Error {
    using Error::Error;
};

// A solver exceeded its theoretical iteration cap; indicates a bug or an
// instance far outside the guarantee's assumptions.
struct IterationCapExceeded : Error {
    using Error::Error;
};

// An adaptive stopping rule hit its cap before the criterion was met.  The
// message carries the final residual/gap as a diagnostic.
struct CapExceeded : Error {
    using Error::Error;
};

// Overflow or other floating-point breakdown detected before producing
// unusable output.
struct NumericalError : Error {
    using Error::Error;
};

// Structurally unusable input (e.g. all-zero histogram rows).
struct DegenerateInput : Error {
    using Error::Error;
};

// Graph topology does not connect all nodes.
struct DisconnectedGraph : Error {
    using Error::Error;
};

// A simulated agent touched data it does not own (test harness check).
struct LocalityViolation : Error {
    using Error::Error;
};

}  // namespace barylab
