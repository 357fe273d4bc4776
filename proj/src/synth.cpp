#include "latfuse/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "latfuse/detmath.hpp"
#include "latfuse/errors.hpp"
#include "latfuse/rng.hpp"

namespace latfuse {

const char* synth_kind_name(SynthKind kind) {
    switch (kind) {
        case SynthKind::noise: return "noise";
        case SynthKind::lowfreq: return "lowfreq";
        case SynthKind::highfreq: return "highfreq";
        case SynthKind::structured_pair: return "structured-pair";
    }
    return "?";
}

SynthKind parse_synth_kind(const std::string& name) {
    if (name == "noise") return SynthKind::noise;
    if (name == "lowfreq") return SynthKind::lowfreq;
    if (name == "highfreq") return SynthKind::highfreq;
    if (name == "structured-pair") return SynthKind::structured_pair;
    throw ConfigError("unknown latent kind '" + name +
                      "' (expected noise|lowfreq|highfreq|structured-pair)");
}

namespace {

// One planar sinusoid: value(x, y) = amp * sin(2*pi*(fx*(x+.5)/W + fy*(y+.5)/H + phase)).
// Frequencies are in cycles across the plane, so integer fx/fy tile exactly.
struct Wave {
    double fx = 0.0;
    double fy = 0.0;
    double amp = 0.0;
    double phase = 0.0;
};

constexpr int kWavesPerPlane = 4;

// Stream id for one (n, c) plane; slot separates pair members / wave bands.
uint64_t plane_index(uint64_t slot, int64_t n, int64_t c) {
    return (slot << 40) | (static_cast<uint64_t>(n) << 20) | static_cast<uint64_t>(c);
}

std::array<Wave, kWavesPerPlane> sample_low_waves(SplitMix64& rng, double amplitude) {
    std::array<Wave, kWavesPerPlane> waves;
    for (Wave& w : waves) {
        int64_t fx = 0;
        int64_t fy = 0;
        do {  // reject the DC pair so every wave actually varies
            fx = static_cast<int64_t>(rng.next_below(7)) - 3;
            fy = static_cast<int64_t>(rng.next_below(7)) - 3;
        } while (fx == 0 && fy == 0);
        w.fx = static_cast<double>(fx);
        w.fy = static_cast<double>(fy);
        w.amp = (amplitude / kWavesPerPlane) * (0.25 + 0.75 * rng.next_unit());
        w.phase = rng.next_unit();
    }
    return waves;
}

// Waves with |f| drawn from a short-wavelength band that scales with the plane.
std::array<Wave, kWavesPerPlane> sample_high_waves(SplitMix64& rng, double amplitude,
                                                   int64_t h, int64_t w) {
    const double side = static_cast<double>(std::min(h, w));
    const double lo = std::max(4.0, side / 6.0);
    const double hi = std::max(lo + 2.0, side / 3.0);
    std::array<Wave, kWavesPerPlane> waves;
    for (Wave& wv : waves) {
        const double turn = rng.next_unit();
        const double radius = lo + (hi - lo) * rng.next_unit();
        wv.fx = radius * sin_turns(turn + 0.25);  // cos(t) = sin(t + quarter turn)
        wv.fy = radius * sin_turns(turn);
        wv.amp = (amplitude / kWavesPerPlane) * (0.25 + 0.75 * rng.next_unit());
        wv.phase = rng.next_unit();
    }
    return waves;
}

template <size_t N>
void add_waves(Tensor<double>& t, int64_t n, int64_t c, const std::array<Wave, N>& waves) {
    const int64_t height = t.shape.h;
    const int64_t width = t.shape.w;
    const double inv_w = 1.0 / static_cast<double>(width);
    const double inv_h = 1.0 / static_cast<double>(height);
    double* plane = t.plane(n, c);
    for (int64_t y = 0; y < height; ++y) {
        const double v = (static_cast<double>(y) + 0.5) * inv_h;
        for (int64_t x = 0; x < width; ++x) {
            const double u = (static_cast<double>(x) + 0.5) * inv_w;
            double acc = plane[y * width + x];
            for (const Wave& wv : waves) {
                acc += wv.amp * sin_turns(wv.fx * u + wv.fy * v + wv.phase);
            }
            plane[y * width + x] = acc;
        }
    }
}

void fill_noise(Tensor<double>& t, uint64_t seed, uint64_t slot, double amplitude) {
    SplitMix64 rng(derive_stream(seed, stream_tag::noise, slot));
    for (double& v : t.data) v = amplitude * rng.next_sym();
}

void fill_waves(Tensor<double>& t, const SynthSpec& spec, uint64_t tag, uint64_t slot,
                double amplitude, bool high_band) {
    for (int64_t n = 0; n < t.shape.n; ++n) {
        for (int64_t c = 0; c < t.shape.c; ++c) {
            SplitMix64 rng(derive_stream(spec.seed, tag, plane_index(slot, n, c)));
            if (high_band) {
                add_waves(t, n, c, sample_high_waves(rng, amplitude, t.shape.h, t.shape.w));
            } else {
                add_waves(t, n, c, sample_low_waves(rng, amplitude));
            }
        }
    }
}

Tensor<double> generate_slot(const SynthSpec& spec, uint64_t slot) {
    validate_shape(spec.shape);
    if (!std::isfinite(spec.amplitude) || spec.amplitude <= 0.0) {
        throw ConfigError("latent amplitude must be finite and positive");
    }
    Tensor<double> t = Tensor<double>::zeros(spec.shape);
    switch (spec.kind) {
        case SynthKind::noise:
            fill_noise(t, spec.seed, slot, spec.amplitude);
            break;
        case SynthKind::lowfreq:
            fill_waves(t, spec, stream_tag::wave_low, slot, spec.amplitude, false);
            break;
        case SynthKind::highfreq:
            fill_waves(t, spec, stream_tag::wave_low, slot, spec.amplitude, false);
            fill_waves(t, spec, stream_tag::wave_high, slot, 0.5 * spec.amplitude, true);
            break;
        case SynthKind::structured_pair:
            fill_waves(t, spec, stream_tag::pair_base, slot, spec.amplitude, false);
            break;
    }
    return t;
}

}  // namespace

Tensor<double> generate_f64(const SynthSpec& spec) { return generate_slot(spec, 0); }

std::pair<Tensor<double>, Tensor<double>> generate_pair_f64(const SynthSpec& spec) {
    if (spec.kind == SynthKind::structured_pair) {
        Tensor<double> base = generate_slot(spec, 0);
        Tensor<double> refined = base;
        // Detail rides on top of the shared low-frequency structure, small
        // enough that the pair stays strongly correlated.
        fill_waves(refined, spec, stream_tag::pair_detail, 0, 0.35 * spec.amplitude, true);
        return {std::move(base), std::move(refined)};
    }
    return {generate_slot(spec, 0), generate_slot(spec, 1)};
}

}  // namespace latfuse
