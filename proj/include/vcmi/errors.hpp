#pragma once

#include <stdexcept>
#include <string>

namespace vcmi {

// Error taxonomy. Every failure the library raises derives from Error; the
// CLI maps the leaf classes onto distinct exit codes.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Mis-shaped inputs: row/column mismatches, empty matrices where data is required.
struct ShapeError : Error {
    using Error::Error;
};

// Inputs outside an operation's mathematical domain (probabilities outside (0,1),
// non-finite values where finite ones are required).
struct DomainError : Error {
    using Error::Error;
};

// Degenerate data: constant columns, too few rows for the requested fit.
struct DataError : Error {
    using Error::Error;
};

// Bad run configuration: unknown keys, invalid ladders, contradictory flags.
struct ConfigError : Error {
    using Error::Error;
};

// Non-finite gradients or moments reaching the optimizer.
struct OptimizerError : Error {
    using Error::Error;
};

// Model fitting failures: EM collapse, singular correlation matrices.
struct FitError : Error {
    using Error::Error;
};

// Estimator-level failures: diverged critics, non-finite objectives.
struct EstimatorError : Error {
    using Error::Error;
};

// Unknown benchmark task names or parameters outside the task's domain.
struct TaskError : Error {
    using Error::Error;
};

// Serialization failures: unreadable, truncated, or malformed checkpoint files.
struct IoError : Error {
    using Error::Error;
};

}  // namespace vcmi
