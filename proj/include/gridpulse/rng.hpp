#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>

namespace gridpulse::rng {

/// SplitMix64 output function applied to state `z`.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Order-sensitive 64-bit hash of a tuple of integers; stable across
/// platforms and builds.
constexpr std::uint64_t stable_hash(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
    return h;
}

/// Counter-based stream: draw i of stream `key` is splitmix64(key + i * gamma),
/// so any draw can be regenerated from (key, i) alone.
class CounterStream {
public:
    using result_type = std::uint64_t;

    constexpr explicit CounterStream(std::uint64_t key) : key_(key) {}
    constexpr CounterStream(std::uint64_t seed, std::uint64_t stream) : key_(stable_hash({seed, stream})) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() { return at(counter_++); }
    constexpr result_type at(std::uint64_t index) const {
        return splitmix64(key_ + index * 0x9e3779b97f4a7c15ULL);
    }

    constexpr std::uint64_t counter() const { return counter_; }
    constexpr std::uint64_t key() const { return key_; }

    /// Uniform on (0, 1] with 53-bit resolution.
    double uniform() { return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53; }

    /// Uniform integer in [0, n), by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = max() - max() % n;
        for (;;) {
            const auto r = (*this)();
            if (r < limit) return r % n;
        }
    }

    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Gamma(shape, scale) by Marsaglia-Tsang; shape < 1 uses the
    /// U^(1/shape) boost.
    double gamma(double shape, double scale) {
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0, 1.0);
            return scale * g * std::pow(uniform(), 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return scale * d * v;
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_{0};
};

}  // namespace gridpulse::rng
