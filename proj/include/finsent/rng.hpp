#pragma once

#include <cstdint>
#include <random>

namespace finsent {

/// Derive an independent mt19937_64 stream from (seed, index, attempt).
/// Streams depend only on their coordinates, so resamples can be computed
/// in any order or on any number of workers with identical results.
inline std::mt19937_64 derive_stream(std::uint64_t seed, std::uint64_t index,
                                     std::uint64_t attempt = 0) {
    std::seed_seq seq{
        static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
        static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
        static_cast<std::uint32_t>(attempt)};
    return std::mt19937_64(seq);
}

/// Uniform draw from [0, n) by rejection, bit-portable across platforms
/// (unlike std::uniform_int_distribution).
inline std::uint64_t bounded_draw(std::mt19937_64& gen, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = gen();
    while (v >= limit) v = gen();
    return v % n;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

} // namespace finsent
