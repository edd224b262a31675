#pragma once

#include <cstdint>
#include <vector>

#include "seectl/errors.hpp"
#include "seectl/grid.hpp"
#include "seectl/parallel.hpp"
#include "seectl/rng.hpp"

namespace seectl {

/// Shared driving noise for an ensemble of paths: Brownian increments and
/// per-mark Poisson counts on a common time grid.  Immutable after
/// construction; fixing (seed, grid, marks, paths) fixes every entry.
class NoiseEnsemble {
public:
    NoiseEnsemble(TimeGrid grid, MarkSpace marks, int paths, std::uint64_t seed,
                  int threads = 1)
        : grid_(grid), marks_(std::move(marks)), paths_(paths), seed_(seed) {
        if (paths < 1) throw ConfigError("NoiseEnsemble: need at least one path");
        fill(threads);
    }

    const TimeGrid& grid() const { return grid_; }
    const MarkSpace& marks() const { return marks_; }
    int paths() const { return paths_; }
    std::uint64_t seed() const { return seed_; }

    /// Brownian increment over [t_k, t_{k+1}] on the given path.
    double dw(int path, int k) const {
        check(path, k);
        return dw_[static_cast<std::size_t>(path) * grid_.steps + k];
    }

    /// Jump count of mark i over [t_k, t_{k+1}] on the given path.
    std::uint32_t jumps(int path, int k, int mark) const {
        check(path, k);
        if (mark < 0 || mark >= marks_.size())
            throw ConfigError("NoiseEnsemble: mark index out of range");
        return counts_[(static_cast<std::size_t>(path) * grid_.steps + k) * marks_.size() +
                       mark];
    }

    /// Compensated jump increments dN_i - nu_i*dt for one (path, step).
    std::vector<double> compensated_increment(int path, int k) const {
        const double dt = grid_.dt();
        std::vector<double> out(marks_.size());
        for (int i = 0; i < marks_.size(); ++i)
            out[i] = static_cast<double>(jumps(path, k, i)) - marks_.intensities[i] * dt;
        return out;
    }

    /// Same jump field, negated Brownian field.
    NoiseEnsemble antithetic_pair() const {
        NoiseEnsemble mirror(*this);
        for (double& v : mirror.dw_) v = -v;
        return mirror;
    }

    /// Raw storage access for serialization.
    const std::vector<double>& dw_data() const { return dw_; }
    const std::vector<std::uint32_t>& jump_data() const { return counts_; }

    /// Rebuilds an ensemble from deserialized storage (cache loading).
    static NoiseEnsemble from_storage(TimeGrid grid, MarkSpace marks, int paths,
                                      std::uint64_t seed, std::vector<double> dw,
                                      std::vector<std::uint32_t> counts) {
        NoiseEnsemble ens(grid, std::move(marks), paths, seed, /*threads=*/1,
                          private_tag{});
        const std::size_t nw = static_cast<std::size_t>(paths) * grid.steps;
        if (dw.size() != nw || counts.size() != nw * ens.marks_.size())
            throw ConfigError("NoiseEnsemble: storage size mismatch");
        ens.dw_ = std::move(dw);
        ens.counts_ = std::move(counts);
        return ens;
    }

private:
    struct private_tag {};
    NoiseEnsemble(TimeGrid grid, MarkSpace marks, int paths, std::uint64_t seed,
                  int, private_tag)
        : grid_(grid), marks_(std::move(marks)), paths_(paths), seed_(seed) {}

    void check(int path, int k) const {
        if (path < 0 || path >= paths_) throw ConfigError("NoiseEnsemble: path out of range");
        if (k < 0 || k >= grid_.steps) throw ConfigError("NoiseEnsemble: step out of range");
    }

    void fill(int threads) {
        const int n = grid_.steps;
        const int m = marks_.size();
        const double dt = grid_.dt();
        const double sqdt = std::sqrt(dt);
        dw_.resize(static_cast<std::size_t>(paths_) * n);
        counts_.resize(static_cast<std::size_t>(paths_) * n * m);
        // Brownian and jump channels live on decorrelated sub-seeds.
        const std::uint64_t sw = rng::substream_seed(seed_, 0x42726F776E);
        const std::uint64_t sj = rng::substream_seed(seed_, 0x4A756D70);
        parallel_for(static_cast<std::size_t>(paths_), threads,
                     [&](std::size_t lo, std::size_t hi) {
                         for (std::size_t p = lo; p < hi; ++p) {
                             for (int k = 0; k < n; ++k) {
                                 dw_[p * n + k] = sqdt * rng::draw_normal(sw, p, k, 0);
                                 for (int i = 0; i < m; ++i) {
                                     counts_[(p * n + k) * m + i] = rng::draw_poisson(
                                         marks_.intensities[i] * dt, sj, p, k, i);
                                 }
                             }
                         }
                     });
    }

    TimeGrid grid_;
    MarkSpace marks_;
    int paths_;
    std::uint64_t seed_;
    std::vector<double> dw_;
    std::vector<std::uint32_t> counts_;
};

/// Convenience factory mirroring the constructor.
inline NoiseEnsemble sample_noise(const TimeGrid& grid, const MarkSpace& marks,
                                  int paths, std::uint64_t seed, int threads = 1) {
    return NoiseEnsemble(grid, marks, paths, seed, threads);
}

}  // namespace seectl
