#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sisvae {

// SplitMix64 finalizer. Used to derive independent stream seeds from one
// master seed so results do not depend on how work is scheduled.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ splitmix64(~stream));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(seed, a), b);
}

// Deterministic random stream. The engine is the standard-specified
// mt19937_64; the derived draws (uniform/normal/poisson) are implemented
// here because the std::*_distribution algorithms are unspecified and
// differ across standard libraries, which would break bit-reproducibility.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    // [0, 1), 53-bit resolution
    double uniform01() { return std::ldexp(static_cast<double>(bits() >> 11), -53); }

    // (0, 1], safe as a log argument
    double uniform01_open() {
        return std::ldexp(static_cast<double>((bits() >> 11) + 1), -53);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // unbiased draw from [0, n)
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = bits();
        } while (x >= limit);
        return x % n;
    }

    // inclusive range
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Box-Muller; the pair is cached so draws come in a fixed order.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01_open();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Knuth's product method, chunked so exp(-lambda) never underflows.
    std::uint64_t poisson(double lambda) {
        std::uint64_t total = 0;
        while (lambda > 500.0) {
            total += poisson_knuth(500.0);
            lambda -= 500.0;
        }
        return total + poisson_knuth(lambda);
    }

private:
    std::uint64_t poisson_knuth(double lambda) {
        if (lambda <= 0.0) return 0;
        const double limit = std::exp(-lambda);
        std::uint64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform01_open();
        } while (p > limit);
        return k - 1;
    }

    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace sisvae
