#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace khronos::rng {

/// SplitMix64 finalizer; the core bit mixer behind every stream here.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Sequential SplitMix64 stream.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) noexcept : state(seed) {}

    std::uint64_t next() noexcept {
        state += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0,1).
    double next_double() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, bound) by rejection; unbiased.
    std::uint64_t next_below(std::uint64_t bound) noexcept {
        const std::uint64_t threshold = -bound % bound;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }
};

/// Counter-based stream: value depends only on (seed, a, b), not on call order.
/// Used for per-row data generation so row-parallel generation is reproducible.
inline std::uint64_t key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
    return mix64(mix64(mix64(seed) ^ a) ^ b);
}

/// Uniform in [0,1) keyed by (seed, a, b).
inline double u01(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
    return static_cast<double>(key(seed, a, b) >> 11) * 0x1.0p-53;
}

/// Uniform in [lo, hi) keyed by (seed, a, b).
inline double uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                      double lo, double hi) noexcept {
    return lo + (hi - lo) * u01(seed, a, b);
}

/// Standard normal via Box-Muller, keyed by (seed, row).
inline double gaussian(std::uint64_t seed, std::uint64_t row) noexcept {
    const std::uint64_t k1 = key(seed, row, 0x67617573ULL);
    const std::uint64_t k2 = key(seed, row, 0x67617574ULL);
    // u strictly in (0,1] so the log is finite
    const double u = (static_cast<double>(k1 >> 11) + 1.0) * 0x1.0p-53;
    const double v = static_cast<double>(k2 >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

/// Fisher-Yates shuffle driven by an explicit stream, identical on every platform.
template <typename T>
void shuffle(std::span<T> items, SplitMix64& stream) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(stream.next_below(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace khronos::rng
