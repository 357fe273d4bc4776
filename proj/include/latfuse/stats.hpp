#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "latfuse/tensor.hpp"

namespace latfuse {

// Per-channel summary over all batch entries and pixels of that channel.
// Non-finite values are counted but excluded from min/max/mean/std; a channel
// with no finite values reports zeros for the aggregates.
struct ChannelStats {
    int64_t channel = 0;
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    double stddev = 0.0;  // population (divide by count)
    int64_t finite_count = 0;
    int64_t nan_count = 0;
    int64_t inf_count = 0;
};

template <Scalar T>
std::vector<ChannelStats> channel_stats(const Tensor<T>& t) {
    std::vector<ChannelStats> out(static_cast<size_t>(t.shape.c));
    for (int64_t c = 0; c < t.shape.c; ++c) {
        ChannelStats& s = out[static_cast<size_t>(c)];
        s.channel = c;
        double lo = 0.0;
        double hi = 0.0;
        double sum = 0.0;
        double sum_sq = 0.0;
        for (int64_t n = 0; n < t.shape.n; ++n) {
            const T* plane = t.plane(n, c);
            const int64_t count = t.shape.h * t.shape.w;
            for (int64_t i = 0; i < count; ++i) {
                const double v = static_cast<double>(plane[i]);
                if (std::isnan(v)) {
                    ++s.nan_count;
                    continue;
                }
                if (std::isinf(v)) {
                    ++s.inf_count;
                    continue;
                }
                if (s.finite_count == 0) {
                    lo = v;
                    hi = v;
                } else {
                    if (v < lo) lo = v;
                    if (v > hi) hi = v;
                }
                ++s.finite_count;
                sum += v;
                sum_sq += v * v;
            }
        }
        if (s.finite_count > 0) {
            const double inv = 1.0 / static_cast<double>(s.finite_count);
            s.min = lo;
            s.max = hi;
            s.mean = sum * inv;
            const double var = std::max(0.0, sum_sq * inv - s.mean * s.mean);
            s.stddev = std::sqrt(var);
        }
    }
    return out;
}

template <Scalar T>
int64_t non_finite_count(const Tensor<T>& t) {
    int64_t bad = 0;
    for (const T& v : t.data) {
        if (!std::isfinite(static_cast<double>(v))) ++bad;
    }
    return bad;
}

// Pearson correlation over all elements; pairs with a non-finite member are
// skipped. Returns 0 when either side is constant.
template <Scalar T>
double pearson(const Tensor<T>& a, const Tensor<T>& b) {
    if (!(a.shape == b.shape)) throw ShapeError("pearson: shape mismatch");
    double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
    int64_t count = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double x = static_cast<double>(a.data[i]);
        const double y = static_cast<double>(b.data[i]);
        if (!std::isfinite(x) || !std::isfinite(y)) continue;
        sa += x;
        sb += y;
        saa += x * x;
        sbb += y * y;
        sab += x * y;
        ++count;
    }
    if (count == 0) return 0.0;
    const double inv = 1.0 / static_cast<double>(count);
    const double cov = sab * inv - (sa * inv) * (sb * inv);
    const double va = saa * inv - (sa * inv) * (sa * inv);
    const double vb = sbb * inv - (sb * inv) * (sb * inv);
    if (va <= 0.0 || vb <= 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

}  // namespace latfuse
