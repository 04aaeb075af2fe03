#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace compfreeze {

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Named substream of a top-level seed. Identical (seed, name) pairs give identical streams.
inline std::mt19937_64 substream(std::uint64_t seed, std::string_view name) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(fnv1a64(name)), static_cast<std::uint32_t>(fnv1a64(name) >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace compfreeze
