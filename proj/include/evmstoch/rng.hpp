#ifndef EVMSTOCH_RNG_HPP
#define EVMSTOCH_RNG_HPP

#include <cstdint>
#include <random>

namespace evmstoch {

// splitmix64 finalizer (Steele, Lea & Flood 2014).
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Counter-based stream derivation: the seed of stream `index` depends only on
// (seed, index), never on the order in which streams are consumed.
//   derive_seed(seed, i) = splitmix64(splitmix64(seed) ^ (i * 0xD1B54A32D192ED03))
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(seed) ^ (index * 0xD1B54A32D192ED03ULL));
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed) { return Engine(seed); }

}  // namespace evmstoch

#endif  // EVMSTOCH_RNG_HPP
