#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "latfuse/tensor.hpp"

namespace latfuse {

// Seeded procedural latents. `noise` is i.i.d. uniform; `lowfreq` sums a few
// long-wavelength 2-D sinusoids per channel (global structure); `highfreq`
// adds short-wavelength sinusoids on top; `structured_pair` yields a
// correlated (base, refined) pair where refined = base + a high-frequency
// detail term. Same spec, same bits, on any platform: all randomness is
// SplitMix64 and all waves go through the deterministic sine in detmath.
enum class SynthKind { noise, lowfreq, highfreq, structured_pair };

const char* synth_kind_name(SynthKind kind);
SynthKind parse_synth_kind(const std::string& name);  // throws ConfigError

struct SynthSpec {
    SynthKind kind = SynthKind::noise;
    Shape4 shape{};
    uint64_t seed = 0;
    double amplitude = 1.0;
};

// For structured_pair this is the base half of the pair.
Tensor<double> generate_f64(const SynthSpec& spec);

// structured_pair: (base, base + detail). Other kinds: two independent
// draws from streams derived off (seed, 0) and (seed, 1).
std::pair<Tensor<double>, Tensor<double>> generate_pair_f64(const SynthSpec& spec);

template <Scalar T>
Tensor<T> generate(const SynthSpec& spec) {
    return cast<T>(generate_f64(spec));
}

template <Scalar T>
std::pair<Tensor<T>, Tensor<T>> generate_pair(const SynthSpec& spec) {
    auto [base, refined] = generate_pair_f64(spec);
    return {cast<T>(base), cast<T>(refined)};
}

}  // namespace latfuse
