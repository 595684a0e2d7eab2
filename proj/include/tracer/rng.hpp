#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tracer {

// FNV-1a 64-bit over raw bytes.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// splitmix64 step, used for seed mixing and the mock embedding streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives an independent engine seed from (seed, key, stream). Sampling and
// splitting use distinct streams so they draw from unrelated sequences.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key, std::uint64_t stream) {
    std::uint64_t s = seed ^ key;
    std::uint64_t a = splitmix64(s);
    s ^= stream;
    std::uint64_t b = splitmix64(s);
    return a ^ (b << 1);
}

// Unbiased draw from [0, n) via rejection; mt19937_64 output is specified by
// the standard, so results are identical across platforms.
inline std::uint64_t bounded_draw(std::mt19937_64& engine, std::uint64_t n) {
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        std::uint64_t r = engine();
        if (r >= threshold) return r % n;
    }
}

// Fisher-Yates; deterministic given the engine state.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::mt19937_64& engine) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(bounded_draw(engine, i));
        std::swap(items[i - 1], items[j]);
    }
}

// Maps a u64 to [0,1) keeping 53 bits of precision.
inline double unit_double(std::uint64_t x) {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

}  // namespace tracer
