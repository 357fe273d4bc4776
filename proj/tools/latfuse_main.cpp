// latfuse: generate synthetic latents, fuse them with AGF/DSF, inspect
// files, check gradients, benchmark kernels.
//
// Exit codes: 0 success, 1 data/runtime error, 2 usage error.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>

#include "latfuse/fusion.hpp"
#include "latfuse/gradcheck.hpp"
#include "latfuse/manifest.hpp"
#include "latfuse/npy.hpp"
#include "latfuse/parallel.hpp"
#include "latfuse/stats.hpp"
#include "latfuse/synth.hpp"
#include "latfuse/version.hpp"

using namespace latfuse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

// Flag values that parse but make no sense. Mapped to exit code 2, like
// CLI11's own parse failures.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

Shape4 parse_shape(const std::string& text) {
    std::istringstream in(text);
    std::string item;
    std::vector<int64_t> dims;
    while (std::getline(in, item, 'x')) {
        try {
            size_t used = 0;
            dims.push_back(std::stoll(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("bad shape '" + text + "' (expected NxCxHxW, e.g. 1x4x128x128)");
        }
    }
    if (dims.size() != 4)
        throw UsageError("bad shape '" + text + "' (expected 4 dims, got " +
                         std::to_string(dims.size()) + ")");
    for (int64_t d : dims)
        if (d < 1) throw UsageError("bad shape '" + text + "' (all dims must be >= 1)");
    return Shape4{dims[0], dims[1], dims[2], dims[3]};
}

Dtype parse_dtype(const std::string& text) {
    if (text == "f32") return Dtype::f32;
    if (text == "f64") return Dtype::f64;
    throw UsageError("bad dtype '" + text + "' (expected f32 or f64)");
}

struct InitSpec {
    bool zeros = true;
    double scale = 0.0;
    uint64_t seed = 0;
};

InitSpec parse_init(const std::string& text) {
    if (text == "zeros") return {};
    const std::string prefix = "uniform:";
    if (text.rfind(prefix, 0) != 0)
        throw UsageError("bad init '" + text + "' (expected zeros or uniform:scale:seed)");
    const std::string rest = text.substr(prefix.size());
    const size_t colon = rest.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 >= rest.size())
        throw UsageError("bad init '" + text + "' (expected uniform:scale:seed)");
    InitSpec spec;
    spec.zeros = false;
    try {
        size_t used = 0;
        spec.scale = std::stod(rest.substr(0, colon), &used);
        if (used != colon) throw std::invalid_argument(rest);
        const std::string seed_text = rest.substr(colon + 1);
        spec.seed = std::stoull(seed_text, &used);
        if (used != seed_text.size()) throw std::invalid_argument(rest);
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception&) {
        throw UsageError("bad init '" + text + "' (expected uniform:scale:seed)");
    }
    if (!std::isfinite(spec.scale) || spec.scale <= 0.0)
        throw UsageError("init scale must be finite and positive");
    return spec;
}

// Per-channel stats block shared by gen-latent, fuse and stats. Returns the
// number of non-finite values so callers can pick their exit code.
template <Scalar T>
int64_t print_stats(const Tensor<T>& t) {
    std::cout << "shape=" << t.shape.str() << "\n";
    std::cout << "dtype=" << dtype_name(dtype_of<T>()) << "\n";
    int64_t bad = 0;
    for (const ChannelStats& s : channel_stats(t)) {
        std::cout << "channel=" << s.channel << " min=" << s.min << " max=" << s.max
                  << " mean=" << s.mean << " std=" << s.stddev << " nan=" << s.nan_count
                  << " inf=" << s.inf_count << "\n";
        bad += s.nan_count + s.inf_count;
    }
    std::cout << "non_finite=" << bad << "\n";
    return bad;
}

int64_t print_stats_any(const AnyTensor& t) {
    return std::visit([](const auto& tt) { return print_stats(tt); }, t);
}

// "lat.npy" -> {"lat.base.npy", "lat.refined.npy"}
std::pair<std::string, std::string> pair_paths(const std::string& out) {
    const size_t slash = out.find_last_of("/\\");
    const size_t dot = out.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return {out + ".base", out + ".refined"};
    return {out.substr(0, dot) + ".base" + out.substr(dot),
            out.substr(0, dot) + ".refined" + out.substr(dot)};
}

// ------------------------------------------------------------- gen-latent --
struct GenArgs {
    std::string kind;
    std::string shape;
    std::string out;
    std::string dtype = "f32";
    uint64_t seed = 0;
    double amplitude = 1.0;
};

template <Scalar T>
void write_and_report(const Tensor<T>& t, const std::string& path) {
    write_latent(t, path);
    std::cout << "file=" << path << "\n";
    print_stats(t);
}

int cmd_gen_latent(const GenArgs& args) {
    SynthSpec spec;
    spec.kind = [&] {
        try {
            return parse_synth_kind(args.kind);
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
    }();
    spec.shape = parse_shape(args.shape);
    spec.seed = args.seed;
    spec.amplitude = args.amplitude;
    if (!std::isfinite(spec.amplitude) || spec.amplitude <= 0.0)
        throw UsageError("amplitude must be finite and positive");
    const Dtype dtype = parse_dtype(args.dtype);

    auto emit = [&]<Scalar T>() {
        if (spec.kind == SynthKind::structured_pair) {
            auto [base, refined] = generate_pair<T>(spec);
            const auto [base_path, refined_path] = pair_paths(args.out);
            write_and_report(base, base_path);
            write_and_report(refined, refined_path);
        } else {
            write_and_report(generate<T>(spec), args.out);
        }
    };
    if (dtype == Dtype::f32)
        emit.template operator()<float>();
    else
        emit.template operator()<double>();
    return kExitOk;
}

// ------------------------------------------------------------------- fuse --
struct FuseArgs {
    std::string method;
    std::string base;
    std::string refined;
    std::string out;
    std::string maps_out;
    std::string init;
    std::string weights;
    int64_t k_agf = 1;
    bool k_agf_given = false;
};

template <Scalar T>
int run_fuse(const FuseArgs& args, const Tensor<T>& base, const Tensor<T>& refined) {
    FusionOutput<T> out;
    if (args.method == "agf") {
        AgfModule<T> m = [&] {
            if (!args.weights.empty()) return load_agf<T>(args.weights);
            const InitSpec init = parse_init(args.init);
            if (init.zeros) return AgfModule<T>::zeros(base.shape.c, args.k_agf);
            return AgfModule<T>::seeded_uniform(base.shape.c, args.k_agf, init.scale,
                                                init.seed);
        }();
        out = agf_forward(m, base, refined);
    } else {
        DsfModule<T> m = [&] {
            if (!args.weights.empty()) return load_dsf<T>(args.weights);
            const InitSpec init = parse_init(args.init);
            if (init.zeros) return DsfModule<T>::zeros();
            return DsfModule<T>::seeded_uniform(init.scale, init.seed);
        }();
        out = dsf_forward(m, base, refined);
    }

    write_latent(out.fused, args.out);
    std::cout << "method=" << args.method << "\n";
    std::cout << "file=" << args.out << "\n";
    print_stats(out.fused);
    if (!args.maps_out.empty()) {
        write_latent(out.maps, args.maps_out);
        std::cout << "maps_file=" << args.maps_out << "\n";
    }
    return kExitOk;
}

int cmd_fuse(const FuseArgs& args) {
    if (args.init.empty() == args.weights.empty())
        throw UsageError("fuse needs exactly one of --init or --weights");
    if (args.k_agf != 1 && args.k_agf != 7)
        throw UsageError("--k-agf must be 1 or 7");
    if (args.k_agf_given && args.method != "agf")
        throw UsageError("--k-agf only applies to --method agf");
    if (args.k_agf_given && !args.weights.empty())
        throw UsageError("--k-agf only applies to --init (a manifest pins its kernel)");

    AnyTensor base = read_latent(args.base);
    AnyTensor refined = read_latent(args.refined);
    if (dtype_of_any(base) != dtype_of_any(refined))
        throw IoError("dtype mismatch: " + args.base + " is " +
                      dtype_name(dtype_of_any(base)) + " but " + args.refined + " is " +
                      dtype_name(dtype_of_any(refined)));
    return std::visit(
        [&](const auto& b) {
            using T = typename std::decay_t<decltype(b)>::value_type;
            return run_fuse<T>(args, b, std::get<Tensor<T>>(refined));
        },
        base);
}

// ------------------------------------------------------------------ stats --
int cmd_stats(const std::string& path) {
    std::cout << "file=" << path << "\n";
    const int64_t bad = print_stats_any(read_latent(path));
    return bad > 0 ? kExitData : kExitOk;
}

// -------------------------------------------------------------- gradcheck --
struct GradArgs {
    std::string method;
    std::string shape = "1x2x5x5";
    uint64_t seed = 1;
    double eps = 1e-5;
    double threshold = 1e-6;
    int64_t k_agf = 1;
};

int cmd_gradcheck(const GradArgs& args) {
    if (args.k_agf != 1 && args.k_agf != 7) throw UsageError("--k-agf must be 1 or 7");
    if (!(args.eps > 0.0)) throw UsageError("--eps must be > 0");
    if (!(args.threshold > 0.0)) throw UsageError("--threshold must be > 0");
    const FusionMethod method =
        args.method == "agf" ? FusionMethod::agf : FusionMethod::dsf;
    const Shape4 shape = parse_shape(args.shape);

    std::cout << "method=" << args.method << "\n";
    if (method == FusionMethod::agf) std::cout << "k_agf=" << args.k_agf << "\n";
    std::cout << "shape=" << shape.str() << "\n";
    std::cout << "seed=" << args.seed << "\n";
    std::cout << "eps=" << args.eps << "\n";
    std::cout << "threshold=" << args.threshold << "\n";
    const GradCheckReport report =
        check_module(method, args.k_agf, shape, args.seed, args.eps, args.threshold);
    std::cout << report.to_string();
    return report.pass ? kExitOk : kExitData;
}

// ------------------------------------------------------------------ bench --
struct BenchArgs {
    std::string op;
    std::string shape = "1x8x128x128";
    std::string impl = "fast";
    std::string dtype = "f32";
    int64_t iters = 10;
    int64_t k_agf = 1;
    uint64_t seed = 1;
};

template <Scalar T>
double checksum_source(const Tensor<T>& t) {
    double sum = 0.0;
    for (const T v : t.data) sum += static_cast<double>(v);
    return sum;
}

template <Scalar T>
int run_bench(const BenchArgs& args) {
    const Shape4 shape = parse_shape(args.shape);
    const bool fast = args.impl == "fast";
    const int64_t N = shape.n, C = shape.c, H = shape.h, W = shape.w;

    // One forward pass under the benchmark clock; returns the tensor whose
    // sum becomes the checksum (so the work cannot be dead-code-eliminated).
    std::function<Tensor<T>()> step;
    int64_t macs_per_out_channel = 0;  // conv ops only
    int64_t total_macs = 0;
    int64_t out_channels = 0;

    if (args.op == "conv1x1" || args.op == "conv7x7") {
        const int64_t k = args.op == "conv1x1" ? 1 : 7;
        out_channels = 2;  // the attention-logits geometry
        auto x = seeded_uniform_tensor<T>(shape, derive_stream(args.seed, 90));
        auto p = Conv2dParams<T>::seeded_uniform(out_channels, C, k, 0.5, args.seed);
        macs_per_out_channel = N * H * W * (C * k * k);
        total_macs = macs_per_out_channel * out_channels;
        step = [x = std::move(x), p = std::move(p), fast] {
            return fast ? conv2d_fast(x, p) : conv2d_naive(x, p);
        };
    } else if (args.op == "agf" || args.op == "dsf") {
        auto base = seeded_uniform_tensor<T>(shape, derive_stream(args.seed, 91));
        auto refined = seeded_uniform_tensor<T>(shape, derive_stream(args.seed, 92));
        if (args.op == "agf") {
            auto m = AgfModule<T>::seeded_uniform(C, args.k_agf, 0.3, args.seed);
            // conv over the 2C-channel concat, two logit channels, plus blend
            total_macs = 2 * (N * H * W * 2 * C * args.k_agf * args.k_agf) +
                         2 * N * C * H * W;
            step = [m = std::move(m), base = std::move(base),
                    refined = std::move(refined), fast] {
                return fast ? agf_forward(m, base, refined).fused
                            : agf_forward_reference(m, base, refined).fused;
            };
        } else {
            auto m = DsfModule<T>::seeded_uniform(0.3, args.seed);
            // avg pool, 2-channel 7x7 conv, blend
            total_macs = N * C * H * W + N * H * W * 2 * 49 + 2 * N * C * H * W;
            step = [m = std::move(m), base = std::move(base),
                    refined = std::move(refined), fast] {
                return fast ? dsf_forward(m, base, refined).fused
                            : dsf_forward_reference(m, base, refined).fused;
            };
        }
    } else {
        throw UsageError("bad op '" + args.op + "'");
    }

    Tensor<T> out = step();  // warmup, also the checksum source
    const auto start = std::chrono::steady_clock::now();
    for (int64_t i = 0; i < args.iters; ++i) out = step();
    const auto stop = std::chrono::steady_clock::now();
    const double seconds =
        std::chrono::duration<double>(stop - start).count() / static_cast<double>(args.iters);

    const double sum = checksum_source(out);
    const uint64_t bits = std::bit_cast<uint64_t>(sum);

    std::cout << "op=" << args.op << "\n";
    std::cout << "impl=" << args.impl << "\n";
    std::cout << "dtype=" << args.dtype << "\n";
    std::cout << "shape=" << shape.str() << "\n";
    std::cout << "threads=" << num_threads() << "\n";
    std::cout << "iters=" << args.iters << "\n";
    if (macs_per_out_channel > 0) {
        std::cout << "out_channels=" << out_channels << "\n";
        std::cout << "macs_per_out_channel=" << macs_per_out_channel << "\n";
        std::cout << "bias_adds_per_out_channel=" << N * H * W << "\n";
    }
    std::cout << "total_macs=" << total_macs << "\n";
    std::cout << "seconds_per_iter=" << seconds << "\n";
    std::cout << "macs_per_sec=" << static_cast<double>(total_macs) / seconds << "\n";
    std::cout << "checksum=" << std::hex << std::setw(16) << std::setfill('0') << bits
              << std::dec << std::setfill(' ') << "\n";
    return kExitOk;
}

int cmd_bench(const BenchArgs& args) {
    if (args.iters < 1) throw UsageError("--iters must be >= 1");
    if (args.k_agf != 1 && args.k_agf != 7) throw UsageError("--k-agf must be 1 or 7");
    if (parse_dtype(args.dtype) == Dtype::f32) return run_bench<float>(args);
    return run_bench<double>(args);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-latent fusion toolbox (AGF / DSF over NCHW latents)"};
    app.set_version_flag("--version", std::string(kVersion));
    app.footer("exit codes: 0 success, 1 data/runtime error, 2 usage error");
    app.fallthrough(true);
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads,
                   "worker threads (default: LATFUSE_THREADS env, else hardware)")
        ->check(CLI::PositiveNumber);

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-latent", "write seeded synthetic latents");
    gen_cmd->add_option("--kind", gen.kind, "noise|lowfreq|highfreq|structured-pair")
        ->required();
    gen_cmd->add_option("--shape", gen.shape, "NxCxHxW, e.g. 1x4x128x128")->required();
    gen_cmd->add_option("--seed", gen.seed, "64-bit seed");
    gen_cmd->add_option("--amplitude", gen.amplitude, "value scale (default 1.0)");
    gen_cmd->add_option("--out", gen.out, "output .npy path (structured-pair writes "
                                          "<out>.base/.refined)")
        ->required();
    gen_cmd->add_option("--dtype", gen.dtype, "f32|f64 (default f32)");

    FuseArgs fuse;
    auto* fuse_cmd = app.add_subcommand("fuse", "blend a base/refined latent pair");
    fuse_cmd->add_option("--method", fuse.method, "agf|dsf")
        ->required()
        ->check(CLI::IsMember({"agf", "dsf"}));
    fuse_cmd->add_option("--base", fuse.base, "base latent .npy")->required();
    fuse_cmd->add_option("--refined", fuse.refined, "refined latent .npy")->required();
    fuse_cmd->add_option("--out", fuse.out, "fused latent .npy")->required();
    fuse_cmd->add_option("--maps-out", fuse.maps_out, "write attention/gate maps here");
    fuse_cmd->add_option("--init", fuse.init, "zeros | uniform:scale:seed");
    fuse_cmd->add_option("--weights", fuse.weights, "weights manifest .json");
    auto* k_opt = fuse_cmd->add_option("--k-agf", fuse.k_agf, "AGF conv kernel, 1 or 7");

    std::string stats_in;
    auto* stats_cmd = app.add_subcommand("stats", "per-channel summary of a latent file");
    stats_cmd->add_option("--in", stats_in, "latent .npy")->required();

    GradArgs grad;
    auto* grad_cmd =
        app.add_subcommand("gradcheck", "analytic vs central-difference gradients (f64)");
    grad_cmd->add_option("--method", grad.method, "agf|dsf")
        ->required()
        ->check(CLI::IsMember({"agf", "dsf"}));
    grad_cmd->add_option("--shape", grad.shape, "NxCxHxW, <= 4096 elements");
    grad_cmd->add_option("--seed", grad.seed, "64-bit seed");
    grad_cmd->add_option("--eps", grad.eps, "finite-difference step (default 1e-5)");
    grad_cmd->add_option("--threshold", grad.threshold, "max relative error (default 1e-6)");
    grad_cmd->add_option("--k-agf", grad.k_agf, "AGF conv kernel, 1 or 7");

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "time a kernel and print throughput");
    bench_cmd->add_option("--op", bench.op, "conv1x1|conv7x7|agf|dsf")
        ->required()
        ->check(CLI::IsMember({"conv1x1", "conv7x7", "agf", "dsf"}));
    bench_cmd->add_option("--shape", bench.shape, "input NxCxHxW (default 1x8x128x128)");
    bench_cmd->add_option("--iters", bench.iters, "timed iterations (default 10)");
    bench_cmd->add_option("--impl", bench.impl, "naive|fast (default fast)")
        ->check(CLI::IsMember({"naive", "fast"}));
    bench_cmd->add_option("--dtype", bench.dtype, "f32|f64 (default f32)");
    bench_cmd->add_option("--seed", bench.seed, "64-bit seed");
    bench_cmd->add_option("--k-agf", bench.k_agf, "AGF conv kernel, 1 or 7");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the message
        return kExitUsage;
    }

    if (threads > 0) set_num_threads(threads);
    fuse.k_agf_given = k_opt->count() > 0;

    std::cout << std::setprecision(10);
    try {
        if (gen_cmd->parsed()) return cmd_gen_latent(gen);
        if (fuse_cmd->parsed()) return cmd_fuse(fuse);
        if (stats_cmd->parsed()) return cmd_stats(stats_in);
        if (grad_cmd->parsed()) return cmd_gradcheck(grad);
        if (bench_cmd->parsed()) return cmd_bench(bench);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;  // unreachable with require_subcommand(1)
}
