// End-to-end checks of the latfuse CLI: exit codes, key=value output,
// file determinism. Takes the CLI binary path as argv[1] and drives it
// through popen, then inspects the files it wrote with the core library.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "latfuse/fusion.hpp"
#include "latfuse/manifest.hpp"
#include "latfuse/npy.hpp"
#include "latfuse/tensor.hpp"
#include "scratch_dir.hpp"

using namespace latfuse;

namespace {

int checks = 0;
int failures = 0;
std::string current_scenario = "(none)";

void scenario(const std::string& name) { current_scenario = name; }

#define CHECK(cond)                                                                   \
    do {                                                                              \
        ++checks;                                                                     \
        if (!(cond)) {                                                                \
            ++failures;                                                               \
            std::cerr << "FAIL [" << current_scenario << "] " << __FILE__ << ":"      \
                      << __LINE__ << "  " << #cond << "\n";                           \
        }                                                                             \
    } while (0)

struct RunResult {
    int exit_code = -1;
    std::string out;  // stdout + stderr
};

std::string g_cli;

RunResult run(const std::string& args) {
    const std::string cmd = "'" + g_cli + "' " + args + " 2>&1";
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) {
        std::cerr << "popen failed for: " << cmd << "\n";
        std::exit(1);
    }
    char buf[4096];
    size_t got;
    while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

// First value of "key=value" in the output, or "" when absent.
std::string value_of(const std::string& out, const std::string& key) {
    std::istringstream in(out);
    std::string line;
    while (std::getline(in, line)) {
        const std::string prefix = key + "=";
        if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
        // also match keys inside per-channel lines ("channel=0 min=... nan=...")
        const size_t pos = line.find(" " + prefix);
        if (pos != std::string::npos) {
            const size_t start = pos + 1 + prefix.size();
            const size_t end = line.find(' ', start);
            return line.substr(start, end == std::string::npos ? end : end - start);
        }
    }
    return "";
}

bool same_bytes(const std::string& a, const std::string& b) { return slurp(a) == slurp(b); }

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: cli_tests <path-to-latfuse>\n";
        return 2;
    }
    g_cli = argv[1];
    ScratchDir dir("latfuse-cli");

    scenario("version and usage errors");
    {
        CHECK(run("--version").exit_code == 0);
        CHECK(run("").exit_code == 2);                       // subcommand required
        CHECK(run("frobnicate").exit_code == 2);             // unknown subcommand
        CHECK(run("stats").exit_code == 2);                  // missing required --in
        CHECK(run("stats --in x --bogus-flag 1").exit_code == 2);
    }

    scenario("gen-latent validation");
    {
        const std::string out = dir.path("v.npy");
        CHECK(run("gen-latent --kind noise --shape 0x1x1x1 --out " + out).exit_code == 2);
        CHECK(run("gen-latent --kind noise --shape 1x1x1 --out " + out).exit_code == 2);
        CHECK(run("gen-latent --kind noise --shape axbxcxd --out " + out).exit_code == 2);
        CHECK(run("gen-latent --kind perlin --shape 1x1x4x4 --out " + out).exit_code == 2);
        CHECK(run("gen-latent --kind noise --shape 1x1x4x4 --amplitude -2 --out " + out)
                  .exit_code == 2);
        CHECK(run("gen-latent --kind noise --shape 1x1x4x4 --dtype f16 --out " + out)
                  .exit_code == 2);
    }

    scenario("gen-latent determinism and stats output");
    {
        const std::string a = dir.path("n1.npy"), b = dir.path("n2.npy");
        const std::string args = "gen-latent --kind noise --shape 2x3x8x8 --seed 7 --out ";
        RunResult r1 = run(args + a);
        CHECK(r1.exit_code == 0);
        CHECK(run(args + b).exit_code == 0);
        CHECK(same_bytes(a, b));
        CHECK(value_of(r1.out, "shape") == "2x3x8x8");
        CHECK(value_of(r1.out, "dtype") == "f32");
        CHECK(value_of(r1.out, "non_finite") == "0");
        // another seed must change the bytes
        const std::string c = dir.path("n3.npy");
        CHECK(run("gen-latent --kind noise --shape 2x3x8x8 --seed 8 --out " + c).exit_code == 0);
        CHECK(!same_bytes(a, c));
    }

    scenario("gen-latent structured pair");
    {
        const std::string out = dir.path("pair.npy");
        RunResult r = run("gen-latent --kind structured-pair --shape 1x2x16x16 --seed 3 --out " + out);
        CHECK(r.exit_code == 0);
        const auto base = read_latent_as<float>(dir.path("pair.base.npy"));
        const auto refined = read_latent_as<float>(dir.path("pair.refined.npy"));
        CHECK(base.shape == refined.shape);
        CHECK(base.data != refined.data);
    }

    scenario("fuse zeros init = exact mean");
    {
        const std::string b = dir.path("fb.npy"), r = dir.path("fr.npy");
        CHECK(run("gen-latent --kind lowfreq --shape 1x3x9x9 --seed 1 --out " + b).exit_code == 0);
        CHECK(run("gen-latent --kind lowfreq --shape 1x3x9x9 --seed 2 --out " + r).exit_code == 0);
        for (const std::string method : {"agf", "dsf"}) {
            const std::string out = dir.path("mean_" + method + ".npy");
            RunResult res = run("fuse --method " + method + " --base " + b + " --refined " + r +
                                " --init zeros --out " + out);
            CHECK(res.exit_code == 0);
            const auto base = read_latent_as<float>(b);
            const auto refined = read_latent_as<float>(r);
            const auto fused = read_latent_as<float>(out);
            double worst = 0.0;
            for (size_t i = 0; i < fused.data.size(); ++i) {
                const double want = 0.5 * (double(base.data[i]) + double(refined.data[i]));
                worst = std::max(worst, std::abs(want - double(fused.data[i])));
            }
            CHECK(worst <= 1e-6);
        }
    }

    scenario("fuse flag validation");
    {
        const std::string b = dir.path("fb.npy"), r = dir.path("fr.npy");
        const std::string common = "fuse --method agf --base " + b + " --refined " + r +
                                   " --out " + dir.path("x.npy");
        CHECK(run(common).exit_code == 2);  // neither --init nor --weights
        CHECK(run(common + " --init zeros --weights w.json").exit_code == 2);  // both
        CHECK(run(common + " --init uniform:0.1").exit_code == 2);
        CHECK(run(common + " --init uniform:0:3").exit_code == 2);
        CHECK(run(common + " --init zeros --k-agf 3").exit_code == 2);
        const std::string dsf = "fuse --method dsf --base " + b + " --refined " + r +
                                " --out " + dir.path("x.npy");
        CHECK(run(dsf + " --init zeros --k-agf 1").exit_code == 2);  // k-agf is AGF-only
        CHECK(run("fuse --method cbam --base " + b + " --refined " + r + " --init zeros --out " +
                  dir.path("x.npy")).exit_code == 2);
    }

    scenario("fuse data errors");
    {
        const std::string b = dir.path("fb.npy");
        const std::string small = dir.path("small.npy");
        CHECK(run("gen-latent --kind noise --shape 1x3x4x4 --out " + small).exit_code == 0);
        CHECK(run("fuse --method agf --base " + b + " --refined " + small +
                  " --init zeros --out " + dir.path("x.npy")).exit_code == 1);  // shape mismatch
        CHECK(run("fuse --method agf --base " + b + " --refined " + dir.path("missing.npy") +
                  " --init zeros --out " + dir.path("x.npy")).exit_code == 1);
        const std::string b64 = dir.path("fb64.npy");
        CHECK(run("gen-latent --kind noise --shape 1x3x9x9 --dtype f64 --out " + b64).exit_code == 0);
        CHECK(run("fuse --method agf --base " + b + " --refined " + b64 +
                  " --init zeros --out " + dir.path("x.npy")).exit_code == 1);  // dtype mismatch
    }

    scenario("fuse maps output");
    {
        const std::string b = dir.path("fb.npy"), r = dir.path("fr.npy");
        const std::string out = dir.path("agf_m.npy"), maps = dir.path("agf_maps.npy");
        CHECK(run("fuse --method agf --base " + b + " --refined " + r +
                  " --init uniform:0.2:5 --out " + out + " --maps-out " + maps).exit_code == 0);
        const auto m = read_latent_as<float>(maps);
        CHECK(m.shape == (Shape4{1, 2, 9, 9}));
        double worst = 0.0;
        for (int64_t h = 0; h < 9; ++h)
            for (int64_t w = 0; w < 9; ++w)
                worst = std::max(worst, std::abs(1.0 - double(m.at(0, 0, h, w)) -
                                                 double(m.at(0, 1, h, w))));
        CHECK(worst <= 1e-6);
        const std::string dmaps = dir.path("dsf_maps.npy");
        CHECK(run("fuse --method dsf --base " + b + " --refined " + r +
                  " --init uniform:0.2:5 --out " + dir.path("dsf_m.npy") + " --maps-out " +
                  dmaps).exit_code == 0);
        CHECK(read_latent_as<float>(dmaps).shape == (Shape4{1, 1, 9, 9}));
    }

    scenario("fuse with weights manifest");
    {
        const std::string b = dir.path("fb.npy"), r = dir.path("fr.npy");
        const std::string manifest = dir.path("agf3.json");
        save_params(AgfModule<float>::seeded_uniform(3, 7, 0.2, 11), manifest);
        const std::string out = dir.path("wfused.npy");
        CHECK(run("fuse --method agf --base " + b + " --refined " + r + " --weights " +
                  manifest + " --out " + out).exit_code == 0);
        // library forward must agree with what the CLI wrote
        const auto expect = agf_forward(load_agf<float>(manifest), read_latent_as<float>(b),
                                        read_latent_as<float>(r));
        CHECK(read_latent_as<float>(out).data == expect.fused.data);
        // method mismatch between flag and manifest
        CHECK(run("fuse --method dsf --base " + b + " --refined " + r + " --weights " +
                  manifest + " --out " + out).exit_code == 1);
        // wrong channel count for these inputs
        const std::string m5 = dir.path("agf5.json");
        save_params(AgfModule<float>::seeded_uniform(5, 1, 0.2, 11), m5);
        CHECK(run("fuse --method agf --base " + b + " --refined " + r + " --weights " + m5 +
                  " --out " + out).exit_code == 1);
    }

    scenario("fuse determinism across thread counts");
    {
        const std::string b = dir.path("fb.npy"), r = dir.path("fr.npy");
        const std::string o1 = dir.path("t1.npy"), o3 = dir.path("t3.npy");
        const std::string common = "fuse --method agf --base " + b + " --refined " + r +
                                   " --init uniform:0.1:7 --k-agf 7 --out ";
        CHECK(run(common + o1 + " --threads 1").exit_code == 0);
        CHECK(run(common + o3 + " --threads 3").exit_code == 0);
        CHECK(same_bytes(o1, o3));
    }

    scenario("stats flags non-finite data");
    {
        Tensor<float> bad({1, 1, 2, 2});
        bad.data = {1.0f, std::numeric_limits<float>::quiet_NaN(),
                    std::numeric_limits<float>::infinity(), 4.0f};
        const std::string path = dir.path("bad.npy");
        write_latent(bad, path);
        RunResult r = run("stats --in " + path);
        CHECK(r.exit_code == 1);
        CHECK(value_of(r.out, "non_finite") == "2");
        CHECK(value_of(r.out, "nan") == "1");
        CHECK(value_of(r.out, "inf") == "1");
        RunResult good = run("stats --in " + dir.path("fb.npy"));
        CHECK(good.exit_code == 0);
        CHECK(run("stats --in " + dir.path("missing.npy")).exit_code == 1);
    }

    scenario("gradcheck");
    {
        RunResult r = run("gradcheck --method agf --shape 1x2x5x5 --seed 1");
        CHECK(r.exit_code == 0);
        CHECK(value_of(r.out, "pass") == "true");
        RunResult d = run("gradcheck --method dsf --shape 1x2x5x5 --seed 1");
        CHECK(d.exit_code == 0);
        // an absurd threshold must fail loudly, not silently pass
        RunResult tight = run("gradcheck --method agf --shape 1x2x5x5 --threshold 1e-13");
        CHECK(tight.exit_code == 1);
        CHECK(value_of(tight.out, "pass") == "false");
        CHECK(run("gradcheck --method agf --shape 1x1x65x65").exit_code == 1);  // cap
        CHECK(run("gradcheck --method agf --shape 1x2x5x5 --eps 0").exit_code == 2);
    }

    scenario("bench");
    {
        RunResult r = run("bench --op conv7x7 --shape 1x8x128x128 --iters 1");
        CHECK(r.exit_code == 0);
        CHECK(value_of(r.out, "macs_per_out_channel") == "6422528");
        CHECK(value_of(r.out, "out_channels") == "2");
        CHECK(value_of(r.out, "checksum").size() == 16);
        RunResult naive = run("bench --op conv7x7 --shape 1x4x32x32 --iters 1 --impl naive");
        RunResult fast = run("bench --op conv7x7 --shape 1x4x32x32 --iters 1 --impl fast");
        CHECK(naive.exit_code == 0 && fast.exit_code == 0);
        CHECK(value_of(naive.out, "checksum") == value_of(fast.out, "checksum"));
        CHECK(run("bench --op agf --shape 1x4x16x16 --iters 1").exit_code == 0);
        CHECK(run("bench --op dsf --shape 1x4x16x16 --iters 1").exit_code == 0);
        CHECK(run("bench --op conv3x3 --iters 1").exit_code == 2);
        CHECK(run("bench --op conv1x1 --iters 0").exit_code == 2);
    }

    scenario("structured-pair base stats pinned for the baked seed");
    {
        const std::string out = dir.path("baked.npy");
        CHECK(run("gen-latent --kind structured-pair --shape 1x4x128x128 --seed 42 --out " +
                  out).exit_code == 0);
        RunResult st = run("stats --in " + dir.path("baked.base.npy"));
        CHECK(st.exit_code == 0);
        const char* pinned[] = {
            "channel=0 min=-0.3875366747 max=0.4079223871 mean=1.371878999e-11 "
            "std=0.1806232364 nan=0 inf=0",
            "channel=1 min=-0.542522192 max=0.5447474718 mean=-8.122280626e-11 "
            "std=0.2278943952 nan=0 inf=0",
            "channel=2 min=-0.6359730959 max=0.6024579406 mean=1.029737406e-11 "
            "std=0.2413359401 nan=0 inf=0",
            "channel=3 min=-0.4515461028 max=0.4605943263 mean=-3.385364211e-11 "
            "std=0.1877111418 nan=0 inf=0",
        };
        for (const char* line : pinned)
            CHECK(st.out.find(line) != std::string::npos);
    }

    scenario("agf and dsf disagree but both stay inside convex bounds");
    {
        const std::string b = dir.path("baked.base.npy"), r = dir.path("baked.refined.npy");
        const std::string fa = dir.path("via_agf.npy"), fd = dir.path("via_dsf.npy");
        CHECK(run("fuse --method agf --base " + b + " --refined " + r +
                  " --init uniform:0.2:9 --out " + fa).exit_code == 0);
        CHECK(run("fuse --method dsf --base " + b + " --refined " + r +
                  " --init uniform:0.2:9 --out " + fd).exit_code == 0);
        const auto base = read_latent_as<float>(b);
        const auto refined = read_latent_as<float>(r);
        const auto agf = read_latent_as<float>(fa);
        const auto dsf = read_latent_as<float>(fd);
        CHECK(agf.data != dsf.data);
        auto in_bounds = [&](const Tensor<float>& fused) {
            for (size_t i = 0; i < fused.data.size(); ++i) {
                const double bv = base.data[i], rv = refined.data[i], fv = fused.data[i];
                const double eps = 1e-6 * (1.0 + std::max(std::abs(bv), std::abs(rv)));
                if (fv < std::min(bv, rv) - eps || fv > std::max(bv, rv) + eps) return false;
            }
            return true;
        };
        CHECK(in_bounds(agf));
        CHECK(in_bounds(dsf));
    }

    scenario("thread control");
    {
        RunResult env = run("bench --op conv1x1 --shape 1x2x8x8 --iters 1");
        CHECK(env.exit_code == 0);  // defaulted threads; value is machine-dependent
        const std::string cmd = "'" + g_cli + "' bench --op conv1x1 --shape 1x2x8x8 --iters 1";
        // LATFUSE_THREADS picks the default, --threads overrides it
        RunResult via_env = [&] {
            RunResult r;
            FILE* p = popen(("LATFUSE_THREADS=3 " + cmd + " 2>&1").c_str(), "r");
            char buf[4096];
            size_t got;
            while ((got = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
            int status = pclose(p);
            r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
            return r;
        }();
        CHECK(via_env.exit_code == 0);
        CHECK(value_of(via_env.out, "threads") == "3");
        RunResult flag = [&] {
            RunResult r;
            FILE* p = popen(("LATFUSE_THREADS=3 " + cmd + " --threads 2 2>&1").c_str(), "r");
            char buf[4096];
            size_t got;
            while ((got = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
            int status = pclose(p);
            r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
            return r;
        }();
        CHECK(flag.exit_code == 0);
        CHECK(value_of(flag.out, "threads") == "2");
    }

    std::cout << "cli_tests: " << (checks - failures) << "/" << checks << " checks passed\n";
    return failures == 0 ? 0 : 1;
}
