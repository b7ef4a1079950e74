#pragma once

// Portable deterministic draws. std::*_distribution output differs between
// standard libraries, so corpora would not be byte-stable across platforms.

#include <cstdint>
#include <random>
#include <string_view>

namespace sepseq {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ mix64(b));
}

/// FNV-1a, for deriving seeds from strings.
constexpr std::uint64_t hash_string(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform over the inclusive range [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<std::int64_t>(engine_());
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return lo + static_cast<std::int64_t>(x % span);
    }

    /// Uniform in [0, 1) with 53 bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform01() < p; }

    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

/// Deterministic uniform in [0, 1) from a key, no state.
inline double hashed_uniform(std::uint64_t key) {
    return static_cast<double>(mix64(key) >> 11) * 0x1.0p-53;
}

}  // namespace sepseq
