#pragma once

#include <stdexcept>
#include <string>

namespace riccilab {

/// Invalid construction parameters (dimension, truncation degree, selectors).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The perturbed metric failed positivity somewhere on the grid.
class DegenerateMetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Solver breakdown: eigensolver failure, non-convergence, step underflow,
/// resonance, contraction failure.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Requested computation is outside what the library supports for this
/// background (e.g. essential neutral modes in the slice projection).
class CapabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Schema or value error in an experiment configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace riccilab
