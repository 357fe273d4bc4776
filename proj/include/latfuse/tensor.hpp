#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "latfuse/errors.hpp"
#include "latfuse/rng.hpp"

namespace latfuse {

template <typename T>
concept Scalar = std::same_as<T, float> || std::same_as<T, double>;

enum class Dtype { f32, f64 };

inline const char* dtype_name(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

template <Scalar T>
constexpr Dtype dtype_of() {
    return std::same_as<T, float> ? Dtype::f32 : Dtype::f64;
}

// Dense NCHW shape. All dims must be >= 1.
struct Shape4 {
    int64_t n = 0;
    int64_t c = 0;
    int64_t h = 0;
    int64_t w = 0;

    constexpr int64_t numel() const { return n * c * h * w; }
    constexpr bool operator==(const Shape4&) const = default;

    std::string str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" +
               std::to_string(h) + "x" + std::to_string(w);
    }
};

inline void validate_shape(const Shape4& s) {
    const int64_t dims[4] = {s.n, s.c, s.h, s.w};
    const char* names[4] = {"n", "c", "h", "w"};
    int64_t numel = 1;
    for (int i = 0; i < 4; ++i) {
        if (dims[i] < 1)
            throw ShapeError("axis " + std::string(names[i]) + " must be >= 1, got " +
                             std::to_string(dims[i]) + " in shape " + s.str());
        if (numel > (int64_t{1} << 40) / dims[i])
            throw ShapeError("shape " + s.str() + " exceeds the element limit");
        numel *= dims[i];
    }
}

// Dense rank-4 tensor, contiguous row-major NCHW. Operations treat tensors
// as immutable values; anything parallel writes disjoint output elements
// with a fixed per-element reduction order, so results do not depend on the
// worker count.
template <Scalar T>
struct Tensor {
    using value_type = T;

    Shape4 shape{};
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(Shape4 s) : shape(s) {
        validate_shape(s);
        data.assign(static_cast<size_t>(s.numel()), T{0});
    }

    Tensor(Shape4 s, std::vector<T> values) : shape(s), data(std::move(values)) {
        validate_shape(s);
        if (static_cast<int64_t>(data.size()) != s.numel())
            throw ShapeError("data length " + std::to_string(data.size()) +
                             " does not match shape " + s.str());
    }

    static Tensor zeros(Shape4 s) { return Tensor(s); }

    static Tensor full(Shape4 s, T value) {
        Tensor t(s);
        std::fill(t.data.begin(), t.data.end(), value);
        return t;
    }

    int64_t numel() const { return shape.numel(); }

    int64_t index(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return ((n * shape.c + c) * shape.h + h) * shape.w + w;
    }

    T at(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return data[static_cast<size_t>(index(n, c, h, w))];
    }
    T& at(int64_t n, int64_t c, int64_t h, int64_t w) {
        return data[static_cast<size_t>(index(n, c, h, w))];
    }

    const T* plane(int64_t n, int64_t c) const {
        return data.data() + static_cast<size_t>((n * shape.c + c) * shape.h * shape.w);
    }
    T* plane(int64_t n, int64_t c) {
        return data.data() + static_cast<size_t>((n * shape.c + c) * shape.h * shape.w);
    }

    bool all_finite() const {
        for (const T v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

template <Scalar To, Scalar From>
Tensor<To> cast(const Tensor<From>& x) {
    Tensor<To> out(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = static_cast<To>(x.data[i]);
    return out;
}

namespace detail {

template <Scalar T>
void require_axes_match(const Tensor<T>& a, const Tensor<T>& b, bool include_c,
                        const char* op) {
    if (a.shape.n != b.shape.n)
        throw ShapeError(std::string(op) + ": axis n mismatch, " + a.shape.str() +
                         " vs " + b.shape.str());
    if (include_c && a.shape.c != b.shape.c)
        throw ShapeError(std::string(op) + ": axis c mismatch, " + a.shape.str() +
                         " vs " + b.shape.str());
    if (a.shape.h != b.shape.h)
        throw ShapeError(std::string(op) + ": axis h mismatch, " + a.shape.str() +
                         " vs " + b.shape.str());
    if (a.shape.w != b.shape.w)
        throw ShapeError(std::string(op) + ": axis w mismatch, " + a.shape.str() +
                         " vs " + b.shape.str());
}

}  // namespace detail

// Channels of `a` first, then channels of `b`, order preserved.
template <Scalar T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_axes_match(a, b, /*include_c=*/false, "concat_channels");
    Tensor<T> out({a.shape.n, a.shape.c + b.shape.c, a.shape.h, a.shape.w});
    const int64_t plane_elems = a.shape.h * a.shape.w;
    for (int64_t n = 0; n < a.shape.n; ++n) {
        for (int64_t c = 0; c < a.shape.c; ++c)
            std::copy_n(a.plane(n, c), plane_elems, out.plane(n, c));
        for (int64_t c = 0; c < b.shape.c; ++c)
            std::copy_n(b.plane(n, c), plane_elems, out.plane(n, a.shape.c + c));
    }
    return out;
}

// Inverse of concat_channels at the split point c_first.
template <Scalar T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int64_t c_first) {
    if (c_first < 1 || c_first >= x.shape.c)
        throw ShapeError("split_channels: split point " + std::to_string(c_first) +
                         " out of range for axis c of " + x.shape.str());
    Tensor<T> a({x.shape.n, c_first, x.shape.h, x.shape.w});
    Tensor<T> b({x.shape.n, x.shape.c - c_first, x.shape.h, x.shape.w});
    const int64_t plane_elems = x.shape.h * x.shape.w;
    for (int64_t n = 0; n < x.shape.n; ++n) {
        for (int64_t c = 0; c < c_first; ++c)
            std::copy_n(x.plane(n, c), plane_elems, a.plane(n, c));
        for (int64_t c = c_first; c < x.shape.c; ++c)
            std::copy_n(x.plane(n, c), plane_elems, b.plane(n, c - c_first));
    }
    return {std::move(a), std::move(b)};
}

// Softmax along the channel axis, per (n, h, w) pixel. The per-pixel channel
// max is subtracted before exponentiation so huge logits cannot overflow.
template <Scalar T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
    Tensor<T> out(x.shape);
    const int64_t plane_elems = x.shape.h * x.shape.w;
    for (int64_t n = 0; n < x.shape.n; ++n) {
        for (int64_t p = 0; p < plane_elems; ++p) {
            T m = x.plane(n, 0)[p];
            for (int64_t c = 1; c < x.shape.c; ++c) m = std::max(m, x.plane(n, c)[p]);
            T sum = T{0};
            for (int64_t c = 0; c < x.shape.c; ++c) {
                const T e = std::exp(x.plane(n, c)[p] - m);
                out.plane(n, c)[p] = e;
                sum += e;
            }
            for (int64_t c = 0; c < x.shape.c; ++c) out.plane(n, c)[p] /= sum;
        }
    }
    return out;
}

// Branches on the sign so exp() never overflows: exact 0.5 at 0, saturates
// cleanly at large |x|.
template <Scalar T>
T sigmoid_scalar(T x) {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
}

template <Scalar T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = sigmoid_scalar(x.data[i]);
    return out;
}

// Per-pixel mean over channels, shape (n, 1, h, w). Channels accumulate in
// ascending order.
template <Scalar T>
Tensor<T> avg_pool_channels(const Tensor<T>& x) {
    Tensor<T> out({x.shape.n, 1, x.shape.h, x.shape.w});
    const int64_t plane_elems = x.shape.h * x.shape.w;
    const T inv_c = T{1} / static_cast<T>(x.shape.c);
    for (int64_t n = 0; n < x.shape.n; ++n) {
        T* dst = out.plane(n, 0);
        for (int64_t p = 0; p < plane_elems; ++p) {
            T sum = T{0};
            for (int64_t c = 0; c < x.shape.c; ++c) sum += x.plane(n, c)[p];
            dst[p] = sum * inv_c;
        }
    }
    return out;
}

// Per-pixel max over channels, shape (n, 1, h, w).
template <Scalar T>
Tensor<T> max_pool_channels(const Tensor<T>& x) {
    Tensor<T> out({x.shape.n, 1, x.shape.h, x.shape.w});
    const int64_t plane_elems = x.shape.h * x.shape.w;
    for (int64_t n = 0; n < x.shape.n; ++n) {
        T* dst = out.plane(n, 0);
        for (int64_t p = 0; p < plane_elems; ++p) {
            T m = x.plane(n, 0)[p];
            for (int64_t c = 1; c < x.shape.c; ++c) m = std::max(m, x.plane(n, c)[p]);
            dst[p] = m;
        }
    }
    return out;
}

// Index of the maximal channel per pixel; ties go to the lowest index. This
// is the subgradient route used by the max-pool backward pass.
template <Scalar T>
std::vector<int32_t> max_pool_argmax_channels(const Tensor<T>& x) {
    std::vector<int32_t> arg(static_cast<size_t>(x.shape.n * x.shape.h * x.shape.w));
    const int64_t plane_elems = x.shape.h * x.shape.w;
    for (int64_t n = 0; n < x.shape.n; ++n) {
        for (int64_t p = 0; p < plane_elems; ++p) {
            int32_t best = 0;
            T m = x.plane(n, 0)[p];
            for (int64_t c = 1; c < x.shape.c; ++c) {
                const T v = x.plane(n, c)[p];
                if (v > m) {
                    m = v;
                    best = static_cast<int32_t>(c);
                }
            }
            arg[static_cast<size_t>(n * plane_elems + p)] = best;
        }
    }
    return arg;
}

enum class BinaryOp { add, sub, mul };

template <Scalar T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape)
        throw ShapeError("elementwise: shape mismatch, " + a.shape.str() + " vs " +
                         b.shape.str());
    Tensor<T> out(a.shape);
    switch (op) {
        case BinaryOp::add:
            for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
            break;
        case BinaryOp::sub:
            for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] - b.data[i];
            break;
        case BinaryOp::mul:
            for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
            break;
    }
    return out;
}

template <Scalar T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::add, a, b); }
template <Scalar T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::sub, a, b); }
template <Scalar T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::mul, a, b); }

template <Scalar T>
Tensor<T> scale(const Tensor<T>& x, T s) {
    Tensor<T> out(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] * s;
    return out;
}

// map has c == 1 and matches x on n, h, w; the map value at each pixel
// multiplies all channels of x at that pixel.
template <Scalar T>
Tensor<T> broadcast_mul(const Tensor<T>& map, const Tensor<T>& x) {
    if (map.shape.c != 1)
        throw ShapeError("broadcast_mul: axis c of map must be 1, got " + map.shape.str());
    detail::require_axes_match(map, x, /*include_c=*/false, "broadcast_mul");
    Tensor<T> out(x.shape);
    const int64_t plane_elems = x.shape.h * x.shape.w;
    for (int64_t n = 0; n < x.shape.n; ++n) {
        const T* m = map.plane(n, 0);
        for (int64_t c = 0; c < x.shape.c; ++c) {
            const T* src = x.plane(n, c);
            T* dst = out.plane(n, c);
            for (int64_t p = 0; p < plane_elems; ++p) dst[p] = m[p] * src[p];
        }
    }
    return out;
}

// Seeded uniform values in [-amplitude, amplitude); one SplitMix64 stream,
// elements drawn in storage order.
template <Scalar T>
Tensor<T> seeded_uniform_tensor(Shape4 shape, uint64_t stream_seed, double amplitude = 1.0) {
    Tensor<T> out(shape);
    SplitMix64 g(stream_seed);
    for (auto& v : out.data) v = static_cast<T>(amplitude * g.next_sym());
    return out;
}

template <Scalar T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape)
        throw ShapeError("max_abs_diff: shape mismatch, " + a.shape.str() + " vs " +
                         b.shape.str());
    T m = T{0};
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace latfuse
