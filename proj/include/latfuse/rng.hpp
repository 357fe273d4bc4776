#pragma once

#include <cstdint>

namespace latfuse {

// SplitMix64 (Steele, Lea, Flood 2014). Chosen because the whole generator
// is a handful of integer ops, so identical bit streams fall out on every
// platform. All randomness in the library flows through this type.
struct SplitMix64 {
    uint64_t state = 0;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        state += 0x9E3779B97F4A7C15ull;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1), 53 mantissa bits, exact construction.
    double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform double in [-1, 1).
    double next_sym() { return 2.0 * next_unit() - 1.0; }

    // Uniform integer in [0, bound). bound is tiny next to 2^64, so the
    // modulo bias is far below anything observable here.
    uint64_t next_below(uint64_t bound) { return next() % bound; }
};

// Stream discipline: every independent consumer derives its own stream from
// (seed, tag, index) so that adding a consumer never shifts another's draws.
inline uint64_t derive_stream(uint64_t seed, uint64_t tag, uint64_t index = 0) {
    SplitMix64 g(seed ^ (tag * 0xA24BAED4963EE407ull) ^ (index * 0x9FB21C651E98DF25ull));
    return g.next();
}

// Stream tags. Values are part of the determinism contract: changing one
// changes every artifact generated under it.
namespace stream_tag {
inline constexpr uint64_t noise = 1;
inline constexpr uint64_t wave_low = 2;
inline constexpr uint64_t wave_high = 3;
inline constexpr uint64_t pair_base = 4;
inline constexpr uint64_t pair_detail = 5;
inline constexpr uint64_t conv_weights = 6;
inline constexpr uint64_t conv_bias = 7;
inline constexpr uint64_t grad_loss = 8;
inline constexpr uint64_t grad_jitter = 9;
}  // namespace stream_tag

}  // namespace latfuse
