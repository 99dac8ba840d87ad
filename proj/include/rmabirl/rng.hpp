#pragma once

// Counter-based random streams. Every stochastic step in the library derives
// its randomness from (seed, key...) so that results do not depend on the
// order in which independent tasks run.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace rmabirl::rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Hashes a seed together with an ordered list of counters.
inline constexpr std::uint64_t mix(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept {
    std::uint64_t h = splitmix64(seed);
    for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    return h;
}

/// Uniform double in [0, 1) addressed by (seed, keys).
inline double uniform_at(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept {
    return static_cast<double>(mix(seed, keys) >> 11) * 0x1.0p-53;
}

/// Sequential engine for one stream.
using Engine = std::mt19937_64;

inline Engine stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    return Engine(mix(seed, keys));
}

/// Uniform integer in [0, n). Rejection sampling keeps it unbiased and
/// independent of the standard library's distribution implementation.
inline std::uint64_t below(Engine& eng, std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    std::uint64_t x = eng();
    while (x < threshold) x = eng();
    return x % n;
}

inline double unit(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

/// Draws `count` distinct elements of `pool` uniformly (partial Fisher-Yates).
template <typename T>
std::vector<T> sample_without_replacement(Engine& eng, std::vector<T> pool, std::size_t count) {
    if (count > pool.size()) count = pool.size();
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(below(eng, pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    return pool;
}

}  // namespace rmabirl::rng
