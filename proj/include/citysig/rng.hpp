#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace citysig {

// SplitMix64 finalizer. Every child seed in the project is derived as
// mix_seed(parent, stream): restart i of a k-means run, tree i of a forest,
// zone i of a synthetic city, and so on. Parallel tasks therefore get
// decorrelated streams that do not depend on scheduling or thread count.
constexpr uint64_t mix_seed(uint64_t seed, uint64_t stream) noexcept {
    uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// mt19937_64 core (its output sequence is pinned by the standard) with
// hand-rolled transforms. std::uniform_*_distribution and friends are
// implementation-defined, which would break cross-platform reproducibility
// of seeded runs.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1), 53-bit resolution
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // unbiased integer in [0, n)
    uint64_t below(uint64_t n) {
        if (n <= 1) return 0;
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = gen_();
            if (r >= threshold) return r % n;
        }
    }

    // standard normal, Box-Muller
    double normal() {
        double u1 = 1.0 - uniform01(); // (0, 1]
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Gamma(shape, 1), Marsaglia-Tsang; shape == 0 yields exactly 0
    double gamma(double shape) {
        if (shape <= 0.0) return 0.0;
        if (shape < 1.0) {
            double u = 1.0 - uniform01();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double t = 1.0 + c * x;
            if (t <= 0.0) continue;
            double v = t * t * t;
            double u = 1.0 - uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

private:
    std::mt19937_64 gen_;
};

// Summation with a recursion tree that depends only on the length, so a
// total computed from per-element values is identical no matter how the
// elements were produced (serially or by any number of threads).
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 16) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const size_t mid = v.size() / 2;
    return pairwise_sum(v.first(mid)) + pairwise_sum(v.subspan(mid));
}

} // namespace citysig
