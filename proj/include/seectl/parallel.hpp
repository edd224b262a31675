#pragma once

#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace seectl {

/// Splits [0, count) into contiguous chunks and runs `fn(begin, end)` on up
/// to `threads` workers.  Callers must write only to disjoint slices; with
/// that discipline the result is independent of the worker count.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
    if (threads <= 1 || count < 2) {
        fn(std::size_t{0}, count);
        return;
    }
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(threads), count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const std::size_t chunk = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, &failure, &failure_mutex, lo, hi] {
            try {
                fn(lo, hi);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Sum with a fixed pairwise association order.  Used for every Monte Carlo
/// reduction so that totals do not depend on worker count or chunking.
inline double pairwise_sum(const double* data, std::size_t count) {
    if (count == 0) return 0.0;
    if (count <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < count; ++i) s += data[i];
        return s;
    }
    const std::size_t half = count / 2;
    return pairwise_sum(data, half) + pairwise_sum(data + half, count - half);
}

inline double pairwise_sum(const std::vector<double>& v) {
    return pairwise_sum(v.data(), v.size());
}

/// Mean and standard error of a sample, reduced deterministically.
struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
};

inline MeanStderr mean_stderr(const std::vector<double>& v) {
    MeanStderr out;
    const std::size_t n = v.size();
    if (n == 0) return out;
    out.mean = pairwise_sum(v) / static_cast<double>(n);
    if (n > 1) {
        std::vector<double> sq(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = v[i] - out.mean;
            sq[i] = d * d;
        }
        const double var = pairwise_sum(sq) / static_cast<double>(n - 1);
        out.stderr_ = std::sqrt(var / static_cast<double>(n));
    }
    return out;
}

}  // namespace seectl
