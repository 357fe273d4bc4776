#include <doctest.h>

#include <cmath>
#include <cstring>

#include "latfuse/fusion.hpp"

using namespace latfuse;

namespace {

template <Scalar T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape == b.shape &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(T)) == 0;
}

template <Scalar T>
T max_mean_dev(const Tensor<T>& fused, const Tensor<T>& a, const Tensor<T>& b) {
    T worst = 0;
    for (size_t i = 0; i < fused.data.size(); ++i)
        worst = std::max(worst,
                         std::abs(fused.data[i] - (a.data[i] + b.data[i]) / T{2}));
    return worst;
}

// fused must sit inside [min(base, refined) - eps, max(...) + eps]
template <Scalar T>
bool within_convex_bounds(const Tensor<T>& fused, const Tensor<T>& a, const Tensor<T>& b) {
    for (size_t i = 0; i < fused.data.size(); ++i) {
        const T lo = std::min(a.data[i], b.data[i]);
        const T hi = std::max(a.data[i], b.data[i]);
        const T eps = static_cast<T>(1e-6) *
                      (T{1} + std::max(std::abs(lo), std::abs(hi)));
        if (fused.data[i] < lo - eps || fused.data[i] > hi + eps) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("module validation") {
    CHECK_THROWS_AS(AgfModule<float>::zeros(4, 3), ConfigError);   // k must be 1 or 7
    CHECK_THROWS_AS(AgfModule<float>::zeros(0, 1), ShapeError);    // channels >= 1
    AgfModule<float> mismatched{Conv2dParams<float>::zeros(2, 6, 1), 4};
    CHECK_THROWS_AS(mismatched.validate(), ConfigError);           // in != 2*channels
    AgfModule<float> three_out{Conv2dParams<float>::zeros(3, 8, 1), 4};
    CHECK_THROWS_AS(three_out.validate(), ConfigError);

    DsfModule<float> wrong_k{Conv2dParams<float>::zeros(1, 2, 3)};
    CHECK_THROWS_AS(wrong_k.validate(), ConfigError);
    DsfModule<float> wrong_in{Conv2dParams<float>::zeros(1, 3, 7)};
    CHECK_THROWS_AS(wrong_in.validate(), ConfigError);

    auto m = AgfModule<float>::zeros(4, 1);
    auto base = seeded_uniform_tensor<float>({1, 3, 4, 4}, 1);  // 3 != 4 channels
    CHECK_THROWS_AS(agf_forward(m, base, base), ShapeError);
    auto refined = seeded_uniform_tensor<float>({1, 4, 4, 5}, 2);
    auto base4 = seeded_uniform_tensor<float>({1, 4, 4, 4}, 3);
    CHECK_THROWS_AS(agf_forward(m, base4, refined), ShapeError);
    CHECK_THROWS_AS(dsf_forward(DsfModule<float>::zeros(), base4, refined), ShapeError);
}

TEST_CASE("zero parameters blend to the exact mean") {
    auto base = seeded_uniform_tensor<float>({1, 4, 8, 8}, 11, 2.0);
    auto refined = seeded_uniform_tensor<float>({1, 4, 8, 8}, 12, 2.0);

    SUBCASE("agf: equal logits, softmax gives 0.5/0.5") {
        for (int64_t k : {int64_t{1}, int64_t{7}}) {
            auto out = agf_forward(AgfModule<float>::zeros(4, k), base, refined);
            CHECK(max_mean_dev(out.fused, base, refined) <= 1e-6f);
            for (float v : out.maps.data) CHECK(v == doctest::Approx(0.5f));
        }
    }
    SUBCASE("dsf: sigmoid(0) = 0.5") {
        auto out = dsf_forward(DsfModule<float>::zeros(), base, refined);
        CHECK(max_mean_dev(out.fused, base, refined) <= 1e-6f);
        for (float v : out.maps.data) CHECK(v == 0.5f);
    }
}

TEST_CASE("agf weights are a partition of unity") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        auto base = seeded_uniform_tensor<float>({1, 4, 16, 16},
                                                 derive_stream(seed, 60), 3.0);
        auto refined = seeded_uniform_tensor<float>({1, 4, 16, 16},
                                                    derive_stream(seed, 61), 3.0);
        auto m = AgfModule<float>::seeded_uniform(4, 1, 0.5, seed);
        auto out = agf_forward(m, base, refined);
        const int64_t plane = 16 * 16;
        for (int64_t p = 0; p < plane; ++p) {
            const float sum = out.maps.plane(0, 0)[p] + out.maps.plane(0, 1)[p];
            REQUIRE(std::abs(sum - 1.0f) <= 1e-6f);
        }
        CHECK(within_convex_bounds(out.fused, base, refined));
    }
}

TEST_CASE("agf logit shift invariance") {
    auto base = seeded_uniform_tensor<double>({1, 2, 6, 6}, 5);
    auto refined = seeded_uniform_tensor<double>({1, 2, 6, 6}, 6);
    auto m = AgfModule<double>::seeded_uniform(2, 1, 0.5, 7);
    auto before = agf_forward(m, base, refined);
    m.attn_conv.bias[0] += 123.25;
    m.attn_conv.bias[1] += 123.25;
    auto after = agf_forward(m, base, refined);
    CHECK(max_abs_diff(before.fused, after.fused) <= 1e-6);
}

TEST_CASE("agf bias saturation picks a side") {
    auto base = seeded_uniform_tensor<float>({1, 4, 6, 6}, 21);
    auto refined = seeded_uniform_tensor<float>({1, 4, 6, 6}, 22);
    auto m = AgfModule<float>::zeros(4, 1);
    m.attn_conv.bias[0] = 40.0f;  // logit channel 0 is the base weight
    auto toward_base = agf_forward(m, base, refined);
    CHECK(max_abs_diff(toward_base.fused, base) <= 1e-6f);
    m.attn_conv.bias[0] = 0.0f;
    m.attn_conv.bias[1] = 40.0f;
    auto toward_refined = agf_forward(m, base, refined);
    CHECK(max_abs_diff(toward_refined.fused, refined) <= 1e-6f);
}

TEST_CASE("both modules are idempotent when the inputs agree") {
    auto x = seeded_uniform_tensor<double>({1, 4, 8, 8}, 31, 2.0);
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        auto agf = AgfModule<double>::seeded_uniform(4, 1, 0.8, seed);
        CHECK(max_abs_diff(agf_forward(agf, x, x).fused, x) <= 1e-6);
        auto agf7 = AgfModule<double>::seeded_uniform(4, 7, 0.8, seed);
        CHECK(max_abs_diff(agf_forward(agf7, x, x).fused, x) <= 1e-6);
        auto dsf = DsfModule<double>::seeded_uniform(0.8, seed);
        CHECK(max_abs_diff(dsf_forward(dsf, x, x).fused, x) <= 1e-6);
    }
}

TEST_CASE("fast forwards equal the straight-line references") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        auto base = seeded_uniform_tensor<float>({1, 4, 16, 16},
                                                 derive_stream(seed, 70));
        auto refined = seeded_uniform_tensor<float>({1, 4, 16, 16},
                                                    derive_stream(seed, 71));
        auto agf = AgfModule<float>::seeded_uniform(4, 1, 0.5, seed);
        auto a1 = agf_forward(agf, base, refined);
        auto a2 = agf_forward_reference(agf, base, refined);
        CHECK(bit_equal(a1.maps, a2.maps));
        CHECK(max_abs_diff(a1.fused, a2.fused) <= 1e-6f);

        auto dsf = DsfModule<float>::seeded_uniform(0.5, seed);
        auto d1 = dsf_forward(dsf, base, refined);
        auto d2 = dsf_forward_reference(dsf, base, refined);
        CHECK(bit_equal(d1.maps, d2.maps));
        CHECK(max_abs_diff(d1.fused, d2.fused) <= 1e-6f);
    }
}

TEST_CASE("dsf gate saturation and strict range") {
    auto base = seeded_uniform_tensor<float>({1, 4, 8, 8}, 41);
    auto refined = seeded_uniform_tensor<float>({1, 4, 8, 8}, 42);

    auto m = DsfModule<float>::zeros();
    m.spatial_conv.bias[0] = 40.0f;
    auto out = dsf_forward(m, base, refined);
    CHECK(max_abs_diff(out.fused, refined) <= 1e-6f);  // gate -> 1 selects refined

    m.spatial_conv.bias[0] = -40.0f;
    auto out2 = dsf_forward(m, base, refined);
    CHECK(max_abs_diff(out2.fused, base) <= 1e-6f);

    // moderate logits keep the gate strictly inside (0, 1)
    auto mm = DsfModule<float>::seeded_uniform(0.1, 43);
    auto out3 = dsf_forward(mm, base, refined);
    for (float g : out3.maps.data) {
        CHECK(g > 0.0f);
        CHECK(g < 1.0f);
    }
    CHECK(out3.maps.shape == Shape4{1, 1, 8, 8});
    CHECK(within_convex_bounds(out3.fused, base, refined));
}

// The pooled tensor is (avg over refined, max over base) in that channel
// order. A kernel that reads exactly one pooled channel at the window center
// exposes both the source and the order: swapping either would change the
// gate. Constant-per-channel planes make the expected pooled values exact.
TEST_CASE("dsf pooling sources and concat order are pinned") {
    const Shape4 s{1, 2, 9, 9};
    Tensor<double> base(s);
    Tensor<double> refined(s);
    // base channels {5, -1}: max = 5, avg = 2
    // refined channels {1, 2}: avg = 1.5, max = 2
    for (int64_t p = 0; p < 81; ++p) {
        base.plane(0, 0)[p] = 5.0;
        base.plane(0, 1)[p] = -1.0;
        refined.plane(0, 0)[p] = 1.0;
        refined.plane(0, 1)[p] = 2.0;
    }

    auto probe = [&](int64_t pooled_channel) {
        auto m = DsfModule<double>::zeros();
        m.spatial_conv.weights.at(0, pooled_channel, 3, 3) = 1.0;
        auto out = dsf_forward(m, base, refined);
        return out.maps.at(0, 0, 4, 4);  // interior pixel, no padding in window
    };

    const double g_avg = probe(0);
    const double g_max = probe(1);
    CHECK(g_avg == doctest::Approx(sigmoid_scalar(1.5)).epsilon(1e-12));  // avg(refined)
    CHECK(g_max == doctest::Approx(sigmoid_scalar(5.0)).epsilon(1e-12));  // max(base)
    // distinguishable from every swapped wiring
    CHECK(std::abs(g_avg - sigmoid_scalar(2.0)) > 1e-3);  // not avg(base)
    CHECK(std::abs(g_max - sigmoid_scalar(2.0)) > 1e-3);  // not max(refined)
}

TEST_CASE("agf backward blend term with zero weights") {
    auto base = seeded_uniform_tensor<double>({1, 3, 5, 5}, 51);
    auto refined = seeded_uniform_tensor<double>({1, 3, 5, 5}, 52);
    auto g = seeded_uniform_tensor<double>({1, 3, 5, 5}, 53);
    auto m = AgfModule<double>::zeros(3, 1);
    auto grads = agf_backward(m, base, refined, g);
    // zero conv weights kill the logit path entirely, leaving 0.5 * g
    for (size_t i = 0; i < g.data.size(); ++i) {
        CHECK(grads.base.data[i] == doctest::Approx(0.5 * g.data[i]).epsilon(1e-12));
        CHECK(grads.refined.data[i] == doctest::Approx(0.5 * g.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("dsf backward under a saturated gate") {
    auto base = seeded_uniform_tensor<double>({1, 3, 5, 5}, 61);
    auto refined = seeded_uniform_tensor<double>({1, 3, 5, 5}, 62);
    auto g = seeded_uniform_tensor<double>({1, 3, 5, 5}, 63);
    auto m = DsfModule<double>::zeros();
    m.spatial_conv.bias[0] = 40.0;
    auto grads = dsf_backward(m, base, refined, g);
    double worst_base = 0, worst_refined = 0;
    for (size_t i = 0; i < g.data.size(); ++i) {
        worst_base = std::max(worst_base, std::abs(grads.base.data[i]));
        worst_refined = std::max(worst_refined, std::abs(grads.refined.data[i] - g.data[i]));
    }
    CHECK(worst_base <= 1e-9);
    CHECK(worst_refined <= 1e-9);
}

TEST_CASE("seeded module init is deterministic and bounded") {
    auto a = AgfModule<float>::seeded_uniform(4, 7, 0.1, 7);
    auto b = AgfModule<float>::seeded_uniform(4, 7, 0.1, 7);
    CHECK(a.attn_conv.weights.data == b.attn_conv.weights.data);
    CHECK(a.attn_conv.bias == b.attn_conv.bias);
    auto c = AgfModule<float>::seeded_uniform(4, 7, 0.1, 8);
    CHECK(a.attn_conv.weights.data != c.attn_conv.weights.data);

    for (float v : a.attn_conv.weights.data) {
        CHECK(v >= -0.1f);
        CHECK(v <= 0.1f);
    }
    auto d = DsfModule<double>::seeded_uniform(0.1, 7);
    auto e = DsfModule<double>::seeded_uniform(0.1, 7);
    CHECK(d.spatial_conv.weights.data == e.spatial_conv.weights.data);
    for (double v : d.spatial_conv.weights.data) {
        CHECK(v >= -0.1);
        CHECK(v <= 0.1);
    }
}

TEST_CASE("map shapes") {
    auto base = seeded_uniform_tensor<float>({2, 4, 6, 7}, 71);
    auto refined = seeded_uniform_tensor<float>({2, 4, 6, 7}, 72);
    auto agf = agf_forward(AgfModule<float>::seeded_uniform(4, 1, 0.3, 1), base, refined);
    CHECK(agf.maps.shape == Shape4{2, 2, 6, 7});
    CHECK(agf.fused.shape == base.shape);
    auto dsf = dsf_forward(DsfModule<float>::seeded_uniform(0.3, 1), base, refined);
    CHECK(dsf.maps.shape == Shape4{2, 1, 6, 7});
    CHECK(dsf.fused.shape == base.shape);
}
