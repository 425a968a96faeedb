#pragma once

#include <stdexcept>
#include <string>

namespace bifrom {

// I/O problems: missing files, unwritable paths.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file content.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// A stated invariant of a domain type does not hold.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible vector/matrix sizes.
struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Bad scalar arguments (non-positive rates, invalid ranks, ...).
struct InvalidArgument : std::invalid_argument {
    explicit InvalidArgument(const std::string& msg) : std::invalid_argument(msg) {}
};

// Iteration produced non-finite values.
struct DivergenceError : std::runtime_error {
    long step = -1;
    DivergenceError(const std::string& msg, long step_index)
        : std::runtime_error(msg + " (step " + std::to_string(step_index) + ")"),
          step(step_index) {}
};

// Newton or training did not converge within the iteration budget.
struct ConvergenceError : std::runtime_error {
    explicit ConvergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Singular or numerically rank-deficient linear algebra.
struct SingularityError : std::runtime_error {
    explicit SingularityError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace bifrom
