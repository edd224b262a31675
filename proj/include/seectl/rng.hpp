#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

#include "seectl/errors.hpp"

namespace seectl {

/// Counter-based random numbers.  Every deviate is a pure function of
/// (seed, path, step, channel), so ensembles can be filled in any order by
/// any number of workers and still come out bit-identical.
///
/// The block cipher is Philox4x32-10.  One block is generated per draw;
/// the low two output words form the 64-bit payload.
namespace rng {

struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static Counter round(Counter c, Key k) {
        const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
        const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return Counter{hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }

    /// Ten rounds, key bumped between rounds.
    static Counter block(Counter c, Key k) {
        for (int r = 0; r < 10; ++r) {
            if (r > 0) {
                k[0] += kWeyl0;
                k[1] += kWeyl1;
            }
            c = round(c, k);
        }
        return c;
    }
};

/// SplitMix64 finalizer; used to derive decorrelated sub-seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Sub-seed for an independent stream (e.g. Brownian vs jump draws).
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t tag) {
    return mix64(seed ^ mix64(tag));
}

/// The single 64-bit payload attached to (seed, path, step, channel).
inline std::uint64_t draw_u64(std::uint64_t seed, std::uint64_t path,
                              std::uint64_t step, std::uint64_t channel) {
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed),
                              static_cast<std::uint32_t>(seed >> 32)};
    const Philox4x32::Counter ctr{
        static_cast<std::uint32_t>(path),
        static_cast<std::uint32_t>(step),
        static_cast<std::uint32_t>(channel),
        static_cast<std::uint32_t>((path >> 32) ^ ((step >> 32) << 8) ^ ((channel >> 32) << 16))};
    const auto out = Philox4x32::block(ctr, key);
    return (std::uint64_t{out[1]} << 32) | out[0];
}

/// Uniform deviate in the open interval (0,1): 53 significant bits, offset
/// by half an ulp so the endpoints are unreachable.
inline double draw_uniform(std::uint64_t seed, std::uint64_t path,
                           std::uint64_t step, std::uint64_t channel) {
    const std::uint64_t bits = draw_u64(seed, path, step, channel) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

/// Inverse standard normal CDF.  Acklam's rational approximation refined by
/// one Halley step against erfc, giving near machine precision on (0,1).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal_quantile: p outside (0,1)");

    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double plow = 0.02425;

    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // One Halley step against the exact CDF residual.
    constexpr double sqrt2 = 1.4142135623730951;
    constexpr double sqrt2pi = 2.5066282746310002;
    const double e = 0.5 * std::erfc(-x / sqrt2) - p;
    const double u = e * sqrt2pi * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

/// Standard normal deviate for the stream position.
inline double draw_normal(std::uint64_t seed, std::uint64_t path,
                          std::uint64_t step, std::uint64_t channel) {
    return normal_quantile(draw_uniform(seed, path, step, channel));
}

/// Poisson deviate with the given mean, by inverting the CDF on a single
/// uniform.  Sequential search is exact for the small per-step means used
/// here; the count is capped far beyond any mass the double CDF can resolve.
inline std::uint32_t poisson_inverse(double mean, double u) {
    if (!(mean >= 0.0)) throw ConfigError("poisson_inverse: negative mean");
    if (mean == 0.0) return 0;
    double p = std::exp(-mean);
    double cdf = p;
    std::uint32_t k = 0;
    const std::uint32_t cap =
        static_cast<std::uint32_t>(mean + 64.0 * std::sqrt(mean + 1.0) + 64.0);
    while (u > cdf && k < cap) {
        ++k;
        p *= mean / static_cast<double>(k);
        cdf += p;
    }
    return k;
}

inline std::uint32_t draw_poisson(double mean, std::uint64_t seed, std::uint64_t path,
                                  std::uint64_t step, std::uint64_t channel) {
    return poisson_inverse(mean, draw_uniform(seed, path, step, channel));
}

}  // namespace rng
}  // namespace seectl
