#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace capsize {

/// Invalid model, grid, region or experiment configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed: divergence, singular system, non-convergence.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A trajectory produced a non-finite state.
class DivergenceError : public NumericalError {
public:
    DivergenceError(double time, const std::string& what)
        : NumericalError(what + " (diverged at t=" + std::to_string(time) + ")"), time_(time) {}
    double time() const { return time_; }

private:
    double time_;
};

}  // namespace capsize
