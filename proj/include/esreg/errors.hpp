#pragma once

#include <stdexcept>
#include <string>

namespace esreg {

/// Malformed or inconsistent input: bad dimensions, NaN, unknown enum, parse failures.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Numerical failure in an optimizer or a linear solve (e.g. rank-deficient refit).
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inference cannot proceed: nonpositive variance, degenerate projection,
/// refitted cross-validation cardinality violated.
class DegenerateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Too many Monte Carlo replications failed for the aggregate to be trusted.
class ExperimentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace esreg
