#pragma once

#include <cstdint>
#include <utility>

#include "latfuse/conv2d.hpp"
#include "latfuse/tensor.hpp"

namespace latfuse {

enum class FusionMethod { agf, dsf };

inline const char* fusion_method_name(FusionMethod m) {
    return m == FusionMethod::agf ? "agf" : "dsf";
}

// Adaptive global fusion: the two latents are concatenated along channels,
// a conv produces two logit maps, a channel softmax turns them into a
// per-pixel partition of unity (w_base, w_refined), and the output is the
// convex blend w_base * base + w_refined * refined.
//
// kernel_size may be 1 or 7. Both appear in the wild for this layer; 1 is
// the default.
template <Scalar T>
struct AgfModule {
    using value_type = T;

    Conv2dParams<T> attn_conv;  // in = 2*channels, out = 2
    int64_t channels = 0;

    void validate() const {
        attn_conv.validate();
        if (channels < 1)
            throw ConfigError("agf: channels must be >= 1, got " + std::to_string(channels));
        const int64_t k = attn_conv.kernel_size();
        if (k != 1 && k != 7)
            throw ConfigError("agf: kernel_size must be 1 or 7, got " + std::to_string(k));
        if (attn_conv.in_channels() != 2 * channels)
            throw ConfigError("agf: attention conv expects in_channels == 2*channels, got " +
                              std::to_string(attn_conv.in_channels()) + " for channels " +
                              std::to_string(channels));
        if (attn_conv.out_channels() != 2)
            throw ConfigError("agf: attention conv must have 2 output channels, got " +
                              std::to_string(attn_conv.out_channels()));
    }

    static AgfModule zeros(int64_t channels, int64_t kernel_size) {
        AgfModule m{Conv2dParams<T>::zeros(2, 2 * channels, kernel_size), channels};
        m.validate();
        return m;
    }

    static AgfModule seeded_uniform(int64_t channels, int64_t kernel_size, double scale,
                                    uint64_t seed) {
        AgfModule m{Conv2dParams<T>::seeded_uniform(2, 2 * channels, kernel_size, scale, seed),
                    channels};
        m.validate();
        return m;
    }
};

// Dynamic spatial fusion: channel-average of the refined latent and
// channel-max of the base latent feed a fixed 7x7 conv, a sigmoid turns the
// single logit map into a gate m, and the output is m * refined +
// (1 - m) * base. Works for any latent channel count.
template <Scalar T>
struct DsfModule {
    using value_type = T;

    Conv2dParams<T> spatial_conv;  // in = 2, out = 1, k = 7

    void validate() const {
        spatial_conv.validate();
        if (spatial_conv.in_channels() != 2 || spatial_conv.out_channels() != 1 ||
            spatial_conv.kernel_size() != 7)
            throw ConfigError("dsf: spatial conv must be 2 -> 1 channels with k = 7, got " +
                              spatial_conv.weights.shape.str());
    }

    static DsfModule zeros() { return DsfModule{Conv2dParams<T>::zeros(1, 2, 7)}; }

    static DsfModule seeded_uniform(double scale, uint64_t seed) {
        return DsfModule{Conv2dParams<T>::seeded_uniform(1, 2, 7, scale, seed)};
    }
};

// Fused latent plus the attention intermediate: for AGF `maps` is
// (n, 2, h, w) holding (w_base, w_refined); for DSF it is (n, 1, h, w)
// holding the sigmoid gate.
template <Scalar T>
struct FusionOutput {
    Tensor<T> fused;
    Tensor<T> maps;
};

namespace detail {

template <Scalar T>
void check_fusion_inputs(const Tensor<T>& base, const Tensor<T>& refined) {
    if (base.shape != refined.shape)
        throw ShapeError("fusion: base shape " + base.shape.str() +
                         " does not match refined shape " + refined.shape.str());
}

}  // namespace detail

template <Scalar T>
FusionOutput<T> agf_forward(const AgfModule<T>& m, const Tensor<T>& base,
                            const Tensor<T>& refined) {
    m.validate();
    detail::check_fusion_inputs(base, refined);
    if (base.shape.c != m.channels)
        throw ShapeError("agf: module configured for " + std::to_string(m.channels) +
                         " channels but latents have " + std::to_string(base.shape.c));

    const Tensor<T> stacked = concat_channels(base, refined);
    const Tensor<T> logits = conv2d_fast(stacked, m.attn_conv);
    Tensor<T> weights = softmax_channels(logits);

    const int64_t N = base.shape.n, C = base.shape.c;
    const int64_t plane_elems = base.shape.h * base.shape.w;
    Tensor<T> fused(base.shape);
    for (int64_t n = 0; n < N; ++n) {
        const T* wb = weights.plane(n, 0);
        const T* wr = weights.plane(n, 1);
        for (int64_t c = 0; c < C; ++c) {
            const T* pb = base.plane(n, c);
            const T* pr = refined.plane(n, c);
            T* pf = fused.plane(n, c);
            for (int64_t p = 0; p < plane_elems; ++p)
                pf[p] = wb[p] * pb[p] + wr[p] * pr[p];
        }
    }
    return {std::move(fused), std::move(weights)};
}

template <Scalar T>
FusionOutput<T> dsf_forward(const DsfModule<T>& m, const Tensor<T>& base,
                            const Tensor<T>& refined) {
    m.validate();
    detail::check_fusion_inputs(base, refined);

    // Pooling sources are asymmetric on purpose: average of refined, max of
    // base; the average goes into pooled channel 0.
    const Tensor<T> pooled =
        concat_channels(avg_pool_channels(refined), max_pool_channels(base));
    Tensor<T> gate = sigmoid(conv2d_fast(pooled, m.spatial_conv));

    const int64_t N = base.shape.n, C = base.shape.c;
    const int64_t plane_elems = base.shape.h * base.shape.w;
    Tensor<T> fused(base.shape);
    for (int64_t n = 0; n < N; ++n) {
        const T* g = gate.plane(n, 0);
        for (int64_t c = 0; c < C; ++c) {
            const T* pb = base.plane(n, c);
            const T* pr = refined.plane(n, c);
            T* pf = fused.plane(n, c);
            for (int64_t p = 0; p < plane_elems; ++p)
                pf[p] = g[p] * pr[p] + (T{1} - g[p]) * pb[p];
        }
    }
    return {std::move(fused), std::move(gate)};
}

// Straight-line compositions over conv2d_naive and the basic tensor ops.
// These are the reference routes the optimized forwards are tested against,
// and the `--impl naive` paths of the benchmark harness.

template <Scalar T>
FusionOutput<T> agf_forward_reference(const AgfModule<T>& m, const Tensor<T>& base,
                                      const Tensor<T>& refined) {
    m.validate();
    detail::check_fusion_inputs(base, refined);
    if (base.shape.c != m.channels)
        throw ShapeError("agf: module configured for " + std::to_string(m.channels) +
                         " channels but latents have " + std::to_string(base.shape.c));
    const Tensor<T> stacked = concat_channels(base, refined);
    const Tensor<T> logits = conv2d_naive(stacked, m.attn_conv);
    Tensor<T> weights = softmax_channels(logits);
    auto [wb, wr] = split_channels(weights, 1);
    Tensor<T> fused = add(broadcast_mul(wb, base), broadcast_mul(wr, refined));
    return {std::move(fused), std::move(weights)};
}

template <Scalar T>
FusionOutput<T> dsf_forward_reference(const DsfModule<T>& m, const Tensor<T>& base,
                                      const Tensor<T>& refined) {
    m.validate();
    detail::check_fusion_inputs(base, refined);
    const Tensor<T> pooled =
        concat_channels(avg_pool_channels(refined), max_pool_channels(base));
    Tensor<T> gate = sigmoid(conv2d_naive(pooled, m.spatial_conv));
    Tensor<T> ones = Tensor<T>::full(gate.shape, T{1});
    Tensor<T> fused =
        add(broadcast_mul(gate, refined), broadcast_mul(sub(ones, gate), base));
    return {std::move(fused), std::move(gate)};
}

template <Scalar T>
struct FusionGrads {
    Tensor<T> base;
    Tensor<T> refined;
    Tensor<T> conv_weights;
    std::vector<T> conv_bias;
};

// Gradients through blend, softmax, conv and concat.
template <Scalar T>
FusionGrads<T> agf_backward(const AgfModule<T>& m, const Tensor<T>& base,
                            const Tensor<T>& refined, const Tensor<T>& grad_fused) {
    m.validate();
    detail::check_fusion_inputs(base, refined);
    if (grad_fused.shape != base.shape)
        throw ShapeError("agf_backward: grad_fused shape " + grad_fused.shape.str() +
                         " does not match latent shape " + base.shape.str());

    const Tensor<T> stacked = concat_channels(base, refined);
    const Tensor<T> logits = conv2d_fast(stacked, m.attn_conv);
    const Tensor<T> weights = softmax_channels(logits);

    const int64_t N = base.shape.n, C = base.shape.c;
    const int64_t plane_elems = base.shape.h * base.shape.w;

    Tensor<T> grad_base(base.shape);
    Tensor<T> grad_refined(base.shape);
    Tensor<T> grad_logits({N, 2, base.shape.h, base.shape.w});

    for (int64_t n = 0; n < N; ++n) {
        const T* wb = weights.plane(n, 0);
        const T* wr = weights.plane(n, 1);
        T* gl0 = grad_logits.plane(n, 0);
        T* gl1 = grad_logits.plane(n, 1);
        for (int64_t p = 0; p < plane_elems; ++p) {
            // Blend: d fused / d base = w_base (per channel), and the weight
            // maps collect channel sums of grad * latent.
            T s0 = T{0}, s1 = T{0};
            for (int64_t c = 0; c < C; ++c) {
                const T g = grad_fused.plane(n, c)[p];
                grad_base.plane(n, c)[p] = wb[p] * g;
                grad_refined.plane(n, c)[p] = wr[p] * g;
                s0 += g * base.plane(n, c)[p];
                s1 += g * refined.plane(n, c)[p];
            }
            // Softmax Jacobian over the two weight channels.
            const T dot = s0 * wb[p] + s1 * wr[p];
            gl0[p] = wb[p] * (s0 - dot);
            gl1[p] = wr[p] * (s1 - dot);
        }
    }

    Conv2dGrads<T> cg = conv2d_backward(stacked, m.attn_conv, grad_logits);
    auto [gx_base, gx_refined] = split_channels(cg.x, C);
    for (size_t i = 0; i < grad_base.data.size(); ++i) {
        grad_base.data[i] += gx_base.data[i];
        grad_refined.data[i] += gx_refined.data[i];
    }
    return {std::move(grad_base), std::move(grad_refined), std::move(cg.weights),
            std::move(cg.bias)};
}

// Gradients through blend, sigmoid, conv and both channel pools. Max-pool
// routes its gradient to the lowest-index maximal channel.
template <Scalar T>
FusionGrads<T> dsf_backward(const DsfModule<T>& m, const Tensor<T>& base,
                            const Tensor<T>& refined, const Tensor<T>& grad_fused) {
    m.validate();
    detail::check_fusion_inputs(base, refined);
    if (grad_fused.shape != base.shape)
        throw ShapeError("dsf_backward: grad_fused shape " + grad_fused.shape.str() +
                         " does not match latent shape " + base.shape.str());

    const Tensor<T> pooled =
        concat_channels(avg_pool_channels(refined), max_pool_channels(base));
    const Tensor<T> logits = conv2d_fast(pooled, m.spatial_conv);
    const Tensor<T> gate = sigmoid(logits);
    const std::vector<int32_t> argmax = max_pool_argmax_channels(base);

    const int64_t N = base.shape.n, C = base.shape.c;
    const int64_t plane_elems = base.shape.h * base.shape.w;

    Tensor<T> grad_base(base.shape);
    Tensor<T> grad_refined(base.shape);
    Tensor<T> grad_logits({N, 1, base.shape.h, base.shape.w});

    for (int64_t n = 0; n < N; ++n) {
        const T* g = gate.plane(n, 0);
        T* gl = grad_logits.plane(n, 0);
        for (int64_t p = 0; p < plane_elems; ++p) {
            T dgate = T{0};
            for (int64_t c = 0; c < C; ++c) {
                const T gf = grad_fused.plane(n, c)[p];
                grad_refined.plane(n, c)[p] = g[p] * gf;
                grad_base.plane(n, c)[p] = (T{1} - g[p]) * gf;
                dgate += gf * (refined.plane(n, c)[p] - base.plane(n, c)[p]);
            }
            gl[p] = dgate * g[p] * (T{1} - g[p]);
        }
    }

    Conv2dGrads<T> cg = conv2d_backward(pooled, m.spatial_conv, grad_logits);
    const T inv_c = T{1} / static_cast<T>(C);
    for (int64_t n = 0; n < N; ++n) {
        const T* gp_avg = cg.x.plane(n, 0);
        const T* gp_max = cg.x.plane(n, 1);
        for (int64_t p = 0; p < plane_elems; ++p) {
            const T davg = gp_avg[p] * inv_c;
            for (int64_t c = 0; c < C; ++c) grad_refined.plane(n, c)[p] += davg;
            const int32_t am = argmax[static_cast<size_t>(n * plane_elems + p)];
            grad_base.plane(n, am)[p] += gp_max[p];
        }
    }
    return {std::move(grad_base), std::move(grad_refined), std::move(cg.weights),
            std::move(cg.bias)};
}

}  // namespace latfuse
