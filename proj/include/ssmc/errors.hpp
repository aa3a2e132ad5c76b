#pragma once

#include <stdexcept>
#include <string>

namespace ssmc {

// Invalid model file, malformed matrix, or violated type invariant.
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad run configuration or CLI usage.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Solver breakdown: singular systems, integrator failure, non-convergence.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (dimension mismatch, unstable mode, ...).
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A checked run-time invariant or configured acceptance threshold does not hold.
class InvariantError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace ssmc
