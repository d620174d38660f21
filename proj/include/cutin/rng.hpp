#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace cutin {

// Independent generator for one (seed, key...) tuple, so results do not
// depend on evaluation order or thread count.
inline std::mt19937_64 keyed_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> key) {
    std::vector<std::uint32_t> words{std::uint32_t(seed), std::uint32_t(seed >> 32)};
    for (std::uint64_t k : key) {
        words.push_back(std::uint32_t(k));
        words.push_back(std::uint32_t(k >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

// Uniform on [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& g) { return double(g() >> 11) * 0x1.0p-53; }

}  // namespace cutin
