#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "latfuse/fusion.hpp"
#include "latfuse/rng.hpp"
#include "latfuse/tensor.hpp"

namespace latfuse {

// Everything here runs in f64. The f32 noise floor sits around 1e-3
// relative, which would drown the 1e-6 agreement the analytic backward
// passes are held to.

struct GradEntry {
    std::string name;
    int64_t count = 0;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    int64_t worst_index = -1;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradEntry> entries;
    double eps = 0.0;
    double threshold = 0.0;
    bool jitter_applied = false;
    bool pass = false;

    std::string to_string() const {
        std::ostringstream os;
        for (const auto& e : entries) {
            os << "tensor=" << e.name << " count=" << e.count
               << " max_rel_err=" << e.max_rel_err << " max_abs_err=" << e.max_abs_err
               << " worst_index=" << e.worst_index
               << " analytic=" << e.analytic_at_worst
               << " numeric=" << e.numeric_at_worst
               << " pass=" << (e.pass ? "true" : "false") << "\n";
        }
        os << "jitter_applied=" << (jitter_applied ? "true" : "false") << "\n";
        os << "pass=" << (pass ? "true" : "false") << "\n";
        return os.str();
    }
};

// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) over a
// flat parameter vector. Throws if an evaluation comes back non-finite,
// naming the offending index.
template <typename Eval>
std::vector<double> finite_diff_vec(const Eval& f, const std::vector<double>& x,
                                    double eps) {
    if (!(eps > 0.0)) throw ConfigError("finite_diff: eps must be > 0");
    std::vector<double> grad(x.size());
    std::vector<double> probe = x;
    for (size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + eps;
        const double hi = f(probe);
        probe[i] = x[i] - eps;
        const double lo = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(hi) || !std::isfinite(lo))
            throw ConfigError("finite_diff: non-finite evaluation at index " +
                              std::to_string(i));
        grad[i] = (hi - lo) / (2.0 * eps);
    }
    return grad;
}

inline Tensor<double> finite_diff(const std::function<double(const Tensor<double>&)>& f,
                                  const Tensor<double>& x, double eps) {
    Tensor<double> probe = x;
    auto eval = [&](const std::vector<double>& v) {
        probe.data = v;
        return f(probe);
    };
    std::vector<double> g = finite_diff_vec(eval, x.data, eps);
    return Tensor<double>(x.shape, std::move(g));
}

// Error scale max(1, |a|, |n|): relative where gradients are large,
// absolute where they sit near zero, the usual gradient-checker metric.
inline GradEntry compare_grads(const std::string& name, const std::vector<double>& analytic,
                               const std::vector<double>& numeric, double threshold) {
    if (analytic.size() != numeric.size())
        throw ConfigError("compare_grads: size mismatch for " + name);
    GradEntry e;
    e.name = name;
    e.count = static_cast<int64_t>(analytic.size());
    for (size_t i = 0; i < analytic.size(); ++i) {
        const double a = analytic[i], n = numeric[i];
        const double abs_err = std::abs(a - n);
        const double rel_err = abs_err / std::max({1.0, std::abs(a), std::abs(n)});
        if (rel_err > e.max_rel_err) {
            e.max_rel_err = rel_err;
            e.worst_index = static_cast<int64_t>(i);
            e.analytic_at_worst = a;
            e.numeric_at_worst = n;
        }
        e.max_abs_err = std::max(e.max_abs_err, abs_err);
    }
    e.pass = e.max_rel_err <= threshold;
    return e;
}

// Exhaustive per-element check of one fusion module: both latent inputs,
// conv weights and conv bias, against central differences of a seeded
// weighted-sum loss. param_scale 0 checks the zero-initialized module.
inline GradCheckReport check_module(FusionMethod method, int64_t k_agf, Shape4 shape,
                                    uint64_t seed, double eps, double threshold,
                                    double param_scale = 0.3) {
    constexpr int64_t kElementCap = 4096;
    validate_shape(shape);
    if (shape.numel() > kElementCap)
        throw ConfigError("gradcheck: shape " + shape.str() + " exceeds the " +
                          std::to_string(kElementCap) + "-element cap");

    Tensor<double> base =
        seeded_uniform_tensor<double>(shape, derive_stream(seed, stream_tag::noise, 0));
    const Tensor<double> refined =
        seeded_uniform_tensor<double>(shape, derive_stream(seed, stream_tag::noise, 1));
    const Tensor<double> loss_w = [&] {
        Tensor<double> w =
            seeded_uniform_tensor<double>(shape, derive_stream(seed, stream_tag::grad_loss));
        for (auto& v : w.data) v = 1.0 + 0.5 * v;  // [0.5, 1.5)
        return w;
    }();

    GradCheckReport report;
    report.eps = eps;
    report.threshold = threshold;

    const bool is_agf = method == FusionMethod::agf;
    AgfModule<double> agf = param_scale == 0.0
                                ? AgfModule<double>::zeros(shape.c, k_agf)
                                : AgfModule<double>::seeded_uniform(shape.c, k_agf,
                                                                    param_scale, seed);
    DsfModule<double> dsf = param_scale == 0.0
                                ? DsfModule<double>::zeros()
                                : DsfModule<double>::seeded_uniform(param_scale, seed);

    if (!is_agf) {
        // The max pool is non-differentiable where channels tie. A tie (or a
        // gap inside the probe radius) makes the central difference straddle
        // an argmax switch, so jitter the base once and insist it clears.
        auto min_gap = [&](const Tensor<double>& b) {
            double gap = std::numeric_limits<double>::infinity();
            const int64_t plane_elems = b.shape.h * b.shape.w;
            for (int64_t n = 0; n < b.shape.n; ++n)
                for (int64_t p = 0; p < plane_elems; ++p) {
                    double best = b.plane(n, 0)[p], second = -std::numeric_limits<double>::infinity();
                    for (int64_t c = 1; c < b.shape.c; ++c) {
                        const double v = b.plane(n, c)[p];
                        if (v > best) {
                            second = best;
                            best = v;
                        } else {
                            second = std::max(second, v);
                        }
                    }
                    if (b.shape.c > 1) gap = std::min(gap, best - second);
                }
            return gap;
        };
        if (min_gap(base) <= 2.0 * eps) {
            SplitMix64 g(derive_stream(seed, stream_tag::grad_jitter));
            for (auto& v : base.data) v += 1e-3 * g.next_sym();
            report.jitter_applied = true;
            if (min_gap(base) <= 2.0 * eps)
                throw ConfigError("gradcheck: persistent max-pool tie after jitter");
        }
    }

    auto loss_of = [&](const Tensor<double>& f) {
        double s = 0.0;
        for (size_t i = 0; i < f.data.size(); ++i) s += loss_w.data[i] * f.data[i];
        return s;
    };
    auto forward_loss = [&](const Tensor<double>& b, const Tensor<double>& r,
                            const Tensor<double>& w, const std::vector<double>& bias) {
        if (is_agf) {
            AgfModule<double> m{{Tensor<double>(agf.attn_conv.weights.shape, w.data), bias},
                                agf.channels};
            return loss_of(agf_forward(m, b, r).fused);
        }
        DsfModule<double> m{{Tensor<double>(dsf.spatial_conv.weights.shape, w.data), bias}};
        return loss_of(dsf_forward(m, b, r).fused);
    };

    const Tensor<double>& weights = is_agf ? agf.attn_conv.weights : dsf.spatial_conv.weights;
    const std::vector<double>& bias = is_agf ? agf.attn_conv.bias : dsf.spatial_conv.bias;
    if (weights.numel() > kElementCap)
        throw ConfigError("gradcheck: conv weights exceed the element cap");

    FusionGrads<double> analytic =
        is_agf ? agf_backward(agf, base, refined, loss_w)
               : dsf_backward(dsf, base, refined, loss_w);

    const Tensor<double> num_base = finite_diff(
        [&](const Tensor<double>& b) { return forward_loss(b, refined, weights, bias); },
        base, eps);
    const Tensor<double> num_refined = finite_diff(
        [&](const Tensor<double>& r) { return forward_loss(base, r, weights, bias); },
        refined, eps);
    const Tensor<double> num_weights = finite_diff(
        [&](const Tensor<double>& w) { return forward_loss(base, refined, w, bias); },
        weights, eps);
    const std::vector<double> num_bias = finite_diff_vec(
        [&](const std::vector<double>& bv) {
            return forward_loss(base, refined, weights, bv);
        },
        bias, eps);

    report.entries.push_back(compare_grads("base", analytic.base.data, num_base.data, threshold));
    report.entries.push_back(
        compare_grads("refined", analytic.refined.data, num_refined.data, threshold));
    report.entries.push_back(
        compare_grads("conv.weights", analytic.conv_weights.data, num_weights.data, threshold));
    report.entries.push_back(compare_grads("conv.bias", analytic.conv_bias, num_bias, threshold));

    report.pass = true;
    for (const auto& e : report.entries) report.pass = report.pass && e.pass;
    return report;
}

}  // namespace latfuse
