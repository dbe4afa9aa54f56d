#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace splatmap {

// Deterministic RNG. All draws are derived from the raw mt19937_64 stream with
// explicit arithmetic (std::*_distribution is implementation-defined and would
// break bit-reproducibility across standard libraries).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n) {
        // Rejection-free modulo is biased for huge n; n here is always tiny.
        return engine_() % n;
    }

    // Standard normal via Box-Muller (no cached spare, keeps the stream simple).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace splatmap
