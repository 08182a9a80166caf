// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/common.hpp"

#include <cmath>
#include <random>
#include <string_view>

namespace cogsplat {

/// Deterministic random stream derived from a root seed and a stream name.
/// Streams are independent by name, so adding a new consumer never perturbs
/// the draws seen by existing ones. All mappings from raw engine output to
/// doubles are spelled out here instead of using std distributions, which are
/// not guaranteed to be reproducible across standard library implementations.
class RngStream {
public:
    RngStream(std::uint64_t root_seed, std::string_view name)
        : engine_(mix(root_seed ^ fnv1a(name))) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Rejection sampling keeps the draw unbiased
    /// and fully determined by the engine sequence.
    int uniform_int(int n) {
        const std::uint64_t bound = ~std::uint64_t{0} - (~std::uint64_t{0} % static_cast<std::uint64_t>(n));
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= bound);
        return static_cast<int>(x % static_cast<std::uint64_t>(n));
    }

    /// Standard normal via Box-Muller; the second value of each pair is cached.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        // u1 in (0, 1] so the log is finite.
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols) {
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
        return m;
    }

    Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform(lo, hi);
        return m;
    }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return h;
    }

private:
    // splitmix64 finalizer; decorrelates nearby seeds before feeding mt19937_64.
    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace cogsplat
