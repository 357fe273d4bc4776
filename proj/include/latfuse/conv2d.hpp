#pragma once

#include <cstdint>
#include <vector>

#include "latfuse/parallel.hpp"
#include "latfuse/rng.hpp"
#include "latfuse/tensor.hpp"

namespace latfuse {

// Zero-padded "same" 2-D cross-correlation. Kernel must be odd and square;
// padding is (k-1)/2 on every side, so spatial output size equals input
// size. Both implementations accumulate each output element in the same
// fixed order (in_channel, then kernel row, then kernel col, bias last),
// which makes conv2d_fast bit-identical to conv2d_naive.
template <Scalar T>
struct Conv2dParams {
    Tensor<T> weights;    // (out_channels, in_channels, k, k)
    std::vector<T> bias;  // out_channels, default zeros

    int64_t out_channels() const { return weights.shape.n; }
    int64_t in_channels() const { return weights.shape.c; }
    int64_t kernel_size() const { return weights.shape.h; }
    int64_t padding() const { return (kernel_size() - 1) / 2; }

    void validate() const {
        const int64_t k = weights.shape.h;
        if (k != weights.shape.w)
            throw ConfigError("conv kernel must be square, got " + weights.shape.str());
        if (k % 2 == 0)
            throw ConfigError("conv kernel size must be odd, got " + std::to_string(k));
        if (static_cast<int64_t>(bias.size()) != weights.shape.n)
            throw ConfigError("conv bias length " + std::to_string(bias.size()) +
                              " does not match out_channels " +
                              std::to_string(weights.shape.n));
    }

    static Conv2dParams zeros(int64_t out_c, int64_t in_c, int64_t k) {
        Conv2dParams p{Tensor<T>({out_c, in_c, k, k}),
                       std::vector<T>(static_cast<size_t>(out_c), T{0})};
        p.validate();
        return p;
    }

    // Weights then bias drawn from two derived streams, uniform in
    // [-scale, scale). Same seed, same bits, always.
    static Conv2dParams seeded_uniform(int64_t out_c, int64_t in_c, int64_t k,
                                       double scale, uint64_t seed) {
        Conv2dParams p{
            seeded_uniform_tensor<T>({out_c, in_c, k, k},
                                     derive_stream(seed, stream_tag::conv_weights), scale),
            std::vector<T>(static_cast<size_t>(out_c), T{0})};
        SplitMix64 g(derive_stream(seed, stream_tag::conv_bias));
        for (auto& b : p.bias) b = static_cast<T>(scale * g.next_sym());
        p.validate();
        return p;
    }
};

namespace detail {

template <Scalar T>
void check_conv_input(const Tensor<T>& x, const Conv2dParams<T>& p) {
    p.validate();
    if (x.shape.c != p.in_channels())
        throw ShapeError("conv2d: axis c mismatch, input has " +
                         std::to_string(x.shape.c) + " channels but kernel expects " +
                         std::to_string(p.in_channels()));
}

}  // namespace detail

// Direct triple-loop definition. This is the ground-truth oracle: every
// other convolution path in the library is tested against it.
template <Scalar T>
Tensor<T> conv2d_naive(const Tensor<T>& x, const Conv2dParams<T>& p) {
    detail::check_conv_input(x, p);
    const int64_t N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const int64_t OC = p.out_channels(), K = p.kernel_size(), pad = p.padding();
    Tensor<T> out({N, OC, H, W});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t oc = 0; oc < OC; ++oc)
            for (int64_t oy = 0; oy < H; ++oy)
                for (int64_t ox = 0; ox < W; ++ox) {
                    T acc = T{0};
                    for (int64_t ci = 0; ci < C; ++ci)
                        for (int64_t ky = 0; ky < K; ++ky) {
                            const int64_t iy = oy + ky - pad;
                            if (iy < 0 || iy >= H) continue;
                            for (int64_t kx = 0; kx < K; ++kx) {
                                const int64_t ix = ox + kx - pad;
                                if (ix < 0 || ix >= W) continue;
                                acc += x.at(n, ci, iy, ix) * p.weights.at(oc, ci, ky, kx);
                            }
                        }
                    out.at(n, oc, oy, ox) = acc + p.bias[static_cast<size_t>(oc)];
                }
    return out;
}

// Same operator, restructured as shifted-row AXPYs into a per-row
// accumulator. For a fixed output element the taps still arrive in
// (in_channel, kernel row, kernel col) order, so the result is bit-identical
// to conv2d_naive; the inner loops are contiguous and vectorize. Rows are
// distributed across workers; every element stays single-writer.
template <Scalar T>
Tensor<T> conv2d_fast(const Tensor<T>& x, const Conv2dParams<T>& p) {
    detail::check_conv_input(x, p);
    const int64_t N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const int64_t OC = p.out_channels(), K = p.kernel_size(), pad = p.padding();
    Tensor<T> out({N, OC, H, W});

    const T* xdata = x.data.data();
    const T* wdata = p.weights.data.data();
    T* odata = out.data.data();
    const int64_t rows = N * OC * H;

    parallel_for(rows, [&](int64_t row_begin, int64_t row_end) {
        std::vector<T> acc(static_cast<size_t>(W));
        for (int64_t row = row_begin; row < row_end; ++row) {
            const int64_t oy = row % H;
            const int64_t oc = (row / H) % OC;
            const int64_t n = row / (H * OC);
            std::fill(acc.begin(), acc.end(), T{0});
            for (int64_t ci = 0; ci < C; ++ci) {
                const T* xplane = xdata + (n * C + ci) * H * W;
                const T* wrow0 = wdata + (oc * C + ci) * K * K;
                for (int64_t ky = 0; ky < K; ++ky) {
                    const int64_t iy = oy + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    const T* xrow = xplane + iy * W;
                    const T* wk = wrow0 + ky * K;
                    for (int64_t kx = 0; kx < K; ++kx) {
                        const T wv = wk[kx];
                        const int64_t shift = kx - pad;
                        const int64_t ox_lo = shift < 0 ? -shift : 0;
                        const int64_t ox_hi = shift > 0 ? W - shift : W;
                        const T* src = xrow + shift;
                        T* dst = acc.data();
                        for (int64_t ox = ox_lo; ox < ox_hi; ++ox)
                            dst[ox] += src[ox] * wv;
                    }
                }
            }
            const T b = p.bias[static_cast<size_t>(oc)];
            T* orow = odata + row * W;
            for (int64_t ox = 0; ox < W; ++ox) orow[ox] = acc[static_cast<size_t>(ox)] + b;
        }
    }, /*grain=*/8);
    return out;
}

template <Scalar T>
struct Conv2dGrads {
    Tensor<T> x;        // same shape as the forward input
    Tensor<T> weights;  // same shape as params.weights
    std::vector<T> bias;
};

// Analytic gradients of the convolution with respect to input, weights and
// bias, given the gradient of the output. Deterministic reduction order:
// each gradient element is a single sequential sum.
template <Scalar T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& x, const Conv2dParams<T>& p,
                               const Tensor<T>& grad_out) {
    detail::check_conv_input(x, p);
    const int64_t N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const int64_t OC = p.out_channels(), K = p.kernel_size(), pad = p.padding();
    if (grad_out.shape != Shape4{N, OC, H, W})
        throw ShapeError("conv2d_backward: grad_out shape " + grad_out.shape.str() +
                         " does not match output shape " + Shape4{N, OC, H, W}.str());

    Conv2dGrads<T> g{Tensor<T>(x.shape), Tensor<T>(p.weights.shape),
                     std::vector<T>(static_cast<size_t>(OC), T{0})};

    for (int64_t oc = 0; oc < OC; ++oc) {
        T sum = T{0};
        for (int64_t n = 0; n < N; ++n) {
            const T* go = grad_out.plane(n, oc);
            for (int64_t i = 0; i < H * W; ++i) sum += go[i];
        }
        g.bias[static_cast<size_t>(oc)] = sum;
    }

    for (int64_t oc = 0; oc < OC; ++oc)
        for (int64_t ci = 0; ci < C; ++ci)
            for (int64_t ky = 0; ky < K; ++ky)
                for (int64_t kx = 0; kx < K; ++kx) {
                    T sum = T{0};
                    for (int64_t n = 0; n < N; ++n)
                        for (int64_t oy = 0; oy < H; ++oy) {
                            const int64_t iy = oy + ky - pad;
                            if (iy < 0 || iy >= H) continue;
                            for (int64_t ox = 0; ox < W; ++ox) {
                                const int64_t ix = ox + kx - pad;
                                if (ix < 0 || ix >= W) continue;
                                sum += grad_out.at(n, oc, oy, ox) * x.at(n, ci, iy, ix);
                            }
                        }
                    g.weights.at(oc, ci, ky, kx) = sum;
                }

    for (int64_t n = 0; n < N; ++n)
        for (int64_t ci = 0; ci < C; ++ci)
            for (int64_t iy = 0; iy < H; ++iy)
                for (int64_t ix = 0; ix < W; ++ix) {
                    T sum = T{0};
                    for (int64_t oc = 0; oc < OC; ++oc)
                        for (int64_t ky = 0; ky < K; ++ky) {
                            const int64_t oy = iy - ky + pad;
                            if (oy < 0 || oy >= H) continue;
                            for (int64_t kx = 0; kx < K; ++kx) {
                                const int64_t ox = ix - kx + pad;
                                if (ox < 0 || ox >= W) continue;
                                sum += grad_out.at(n, oc, oy, ox) *
                                       p.weights.at(oc, ci, ky, kx);
                            }
                        }
                    g.x.at(n, ci, iy, ix) = sum;
                }

    return g;
}

}  // namespace latfuse
