#include <doctest.h>

#include <cmath>
#include <cstring>

#include "latfuse/stats.hpp"
#include "latfuse/synth.hpp"

using namespace latfuse;

namespace {

template <Scalar T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape == b.shape &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(T)) == 0;
}

Tensor<double> channel_slice(const Tensor<double>& t, int64_t c) {
    const int64_t plane_elems = t.shape.h * t.shape.w;
    std::vector<double> v(t.plane(0, c), t.plane(0, c) + plane_elems);
    return Tensor<double>({1, 1, t.shape.h, t.shape.w}, std::move(v));
}

// mean over interior pixels of |d/dx| + |d/dy|, averaged across channels
double mean_spatial_gradient(const Tensor<double>& t) {
    double sum = 0;
    int64_t count = 0;
    for (int64_t n = 0; n < t.shape.n; ++n)
        for (int64_t c = 0; c < t.shape.c; ++c) {
            const double* p = t.plane(n, c);
            for (int64_t y = 0; y + 1 < t.shape.h; ++y)
                for (int64_t x = 0; x + 1 < t.shape.w; ++x) {
                    const double v = p[y * t.shape.w + x];
                    sum += std::abs(p[y * t.shape.w + x + 1] - v) +
                           std::abs(p[(y + 1) * t.shape.w + x] - v);
                    ++count;
                }
        }
    return sum / static_cast<double>(count);
}

}  // namespace

TEST_CASE("kind names round trip and reject junk") {
    for (auto k : {SynthKind::noise, SynthKind::lowfreq, SynthKind::highfreq,
                   SynthKind::structured_pair})
        CHECK(parse_synth_kind(synth_kind_name(k)) == k);
    CHECK_THROWS_AS(parse_synth_kind("perlin"), ConfigError);
}

TEST_CASE("same spec, same bits") {
    for (auto kind : {SynthKind::noise, SynthKind::lowfreq, SynthKind::highfreq}) {
        SynthSpec spec{kind, {1, 3, 24, 20}, 1234, 1.5};
        CHECK(bit_equal(generate_f64(spec), generate_f64(spec)));
        auto [a1, b1] = generate_pair_f64(spec);
        auto [a2, b2] = generate_pair_f64(spec);
        CHECK(bit_equal(a1, a2));
        CHECK(bit_equal(b1, b2));
        CHECK_FALSE(bit_equal(a1, b1));  // pair members are distinct draws
    }
    SynthSpec pair{SynthKind::structured_pair, {1, 2, 16, 16}, 7, 1.0};
    auto [p1, q1] = generate_pair_f64(pair);
    auto [p2, q2] = generate_pair_f64(pair);
    CHECK(bit_equal(p1, p2));
    CHECK(bit_equal(q1, q2));
    // the base half equals the single-tensor generation
    CHECK(bit_equal(p1, generate_f64(pair)));
}

TEST_CASE("different seeds change the output") {
    SynthSpec a{SynthKind::lowfreq, {1, 2, 16, 16}, 1, 1.0};
    SynthSpec b = a;
    b.seed = 2;
    CHECK_FALSE(bit_equal(generate_f64(a), generate_f64(b)));
}

TEST_CASE("noise: bounded, near-zero mean, i.i.d.-looking") {
    SynthSpec spec{SynthKind::noise, {1, 4, 128, 128}, 42, 1.0};
    auto t = generate_f64(spec);
    double mean = 0;
    for (double v : t.data) {
        CHECK(v >= -1.0);
        CHECK(v < 1.0);
        mean += v;
    }
    mean /= static_cast<double>(t.numel());
    CHECK(std::abs(mean) <= 0.05);

    SynthSpec amp = spec;
    amp.amplitude = 0.25;
    auto small = generate_f64(amp);
    for (double v : small.data) CHECK(std::abs(v) <= 0.25);
}

TEST_CASE("amplitude scales the field exactly") {
    for (auto kind : {SynthKind::noise, SynthKind::lowfreq, SynthKind::highfreq}) {
        SynthSpec one{kind, {1, 2, 12, 12}, 99, 1.0};
        SynthSpec two = one;
        two.amplitude = 2.0;
        auto a = generate_f64(one);
        auto b = generate_f64(two);
        for (size_t i = 0; i < a.data.size(); ++i) CHECK(b.data[i] == 2.0 * a.data[i]);
    }
}

TEST_CASE("wave kinds are smooth, finite and channel-distinct") {
    SynthSpec spec{SynthKind::lowfreq, {1, 4, 32, 32}, 5, 1.0};
    auto t = generate_f64(spec);
    CHECK(t.all_finite());
    // per-plane streams: channels must not repeat each other
    CHECK(max_abs_diff(channel_slice(t, 0), channel_slice(t, 1)) > 1e-6);
    // bounded by the sum of wave amplitudes
    for (double v : t.data) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("highfreq carries more spatial gradient than lowfreq") {
    SynthSpec low{SynthKind::lowfreq, {1, 4, 64, 64}, 42, 1.0};
    SynthSpec high = low;
    high.kind = SynthKind::highfreq;
    CHECK(mean_spatial_gradient(generate_f64(high)) >
          mean_spatial_gradient(generate_f64(low)));
}

TEST_CASE("structured pair: correlated base/refined with high-frequency detail") {
    SynthSpec spec{SynthKind::structured_pair, {1, 4, 128, 128}, 42, 1.0};
    auto [base, refined] = generate_pair_f64(spec);
    CHECK(base.all_finite());
    CHECK(refined.all_finite());
    CHECK_FALSE(bit_equal(base, refined));

    // pinned for seed 42: every channel correlates strongly
    for (int64_t c = 0; c < 4; ++c) {
        const double rho = pearson(channel_slice(base, c), channel_slice(refined, c));
        CAPTURE(c);
        CHECK(rho >= 0.5);
    }

    // the detail term is busier than the structure it decorates
    auto detail = sub(refined, base);
    CHECK(mean_spatial_gradient(detail) > mean_spatial_gradient(base));
}

TEST_CASE("float output is the cast of the f64 field") {
    SynthSpec spec{SynthKind::structured_pair, {1, 2, 16, 16}, 11, 1.0};
    auto f64 = generate_f64(spec);
    auto f32 = generate<float>(spec);
    CHECK(bit_equal(f32, cast<float>(f64)));
    auto [bf, rf] = generate_pair<float>(spec);
    auto [bd, rd] = generate_pair_f64(spec);
    CHECK(bit_equal(bf, cast<float>(bd)));
    CHECK(bit_equal(rf, cast<float>(rd)));
}

TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS_AS(generate_f64({SynthKind::noise, {0, 1, 4, 4}, 1, 1.0}), ShapeError);
    CHECK_THROWS_AS(generate_f64({SynthKind::noise, {1, 1, 4, 4}, 1, 0.0}), ConfigError);
    CHECK_THROWS_AS(generate_f64({SynthKind::noise, {1, 1, 4, 4}, 1, -2.0}), ConfigError);
}
