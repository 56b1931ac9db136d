#pragma once

#include <cstdint>
#include <cstddef>

namespace focustrack {

// SplitMix64 generator plus the handful of distributions the project needs.
// Everything is integer-seeded and computed without std::*_distribution so
// streams are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64();
    // [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // [0, n)
    std::size_t index(std::size_t n);
    double normal();
    // Normal(0, std) resampled until |x| <= 2 std.
    double truncated_normal(double std);
    bool bernoulli(double p) { return uniform() < p; }

    // Independent child stream; used to give each sequence / sample its own generator.
    Rng fork(std::uint64_t salt);

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace focustrack
