#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "seectl/errors.hpp"

namespace seectl {

/// Uniform partition of [0, T] into `steps` intervals.
struct TimeGrid {
    double horizon = 1.0;
    int steps = 1;

    TimeGrid() = default;
    TimeGrid(double T, int n) : horizon(T), steps(n) {
        if (!(T > 0.0)) throw ConfigError("TimeGrid: horizon must be positive");
        if (n < 1) throw ConfigError("TimeGrid: need at least one step");
    }

    double dt() const { return horizon / steps; }
    double time(int k) const { return k * dt(); }
    int points() const { return steps + 1; }
};

/// Finite mark space: m atoms with strictly positive intensities nu_i.
/// nu(E) = sum nu_i is finite by construction.
struct MarkSpace {
    std::vector<double> atoms;       ///< mark labels e_i
    std::vector<double> intensities; ///< nu_i > 0

    MarkSpace() = default;
    MarkSpace(std::vector<double> marks, std::vector<double> nus)
        : atoms(std::move(marks)), intensities(std::move(nus)) {
        if (atoms.size() != intensities.size())
            throw ConfigError("MarkSpace: atoms and intensities differ in length");
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            if (!(intensities[i] > 0.0))
                throw ConfigError("MarkSpace: intensities must be strictly positive");
            for (std::size_t j = i + 1; j < atoms.size(); ++j)
                if (atoms[i] == atoms[j])
                    throw ConfigError("MarkSpace: atoms must be distinct");
        }
    }

    int size() const { return static_cast<int>(atoms.size()); }

    /// Total intensity nu(E).
    double total_intensity() const {
        double s = 0.0;
        for (double v : intensities) s += v;
        return s;
    }
};

}  // namespace seectl
