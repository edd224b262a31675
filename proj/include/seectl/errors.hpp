#pragma once

#include <stdexcept>
#include <string>

namespace seectl {

/// Invalid user input: malformed configs, out-of-domain parameters, shape
/// mismatches between ensembles and grids.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Numerical failure inside a solver (singular step matrix, state blow-up,
/// rank-deficient regression, step underflow).  Carries the offending
/// location when one exists.
class SolverError : public std::runtime_error {
public:
    explicit SolverError(const std::string& what, long step = -1, long path = -1)
        : std::runtime_error(what), step_(step), path_(path) {}

    long step() const noexcept { return step_; }
    long path() const noexcept { return path_; }

private:
    long step_;
    long path_;
};

}  // namespace seectl
