// Python bindings: numpy-array views of the core operations. Arrays cross
// the boundary by copy, NCHW, float32/float64 only.

#include <cstring>
#include <stdexcept>
#include <string>
#include <variant>

#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include "latfuse/conv2d.hpp"
#include "latfuse/fusion.hpp"
#include "latfuse/gradcheck.hpp"
#include "latfuse/manifest.hpp"
#include "latfuse/npy.hpp"
#include "latfuse/parallel.hpp"
#include "latfuse/synth.hpp"
#include "latfuse/version.hpp"

namespace py = pybind11;
using namespace latfuse;

namespace {

template <Scalar T>
py::array_t<T> to_array(const Tensor<T>& t) {
    py::array_t<T> out({t.shape.n, t.shape.c, t.shape.h, t.shape.w});
    std::memcpy(out.mutable_data(), t.data.data(), t.data.size() * sizeof(T));
    return out;
}

template <Scalar T>
py::array_t<T> vec_to_array(const std::vector<T>& v) {
    py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
    std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(T));
    return out;
}

template <Scalar T>
Tensor<T> from_array(const py::array& a, const char* what) {
    if (!py::isinstance<py::array_t<T>>(a))
        throw py::type_error(std::string(what) + ": expected dtype " +
                             (sizeof(T) == 4 ? "float32" : "float64"));
    auto arr = py::array_t<T, py::array::c_style>::ensure(a);
    if (arr.ndim() != 4)
        throw py::value_error(std::string(what) + ": expected 4-d NCHW array, got " +
                              std::to_string(arr.ndim()) + "-d");
    const Shape4 shape{arr.shape(0), arr.shape(1), arr.shape(2), arr.shape(3)};
    Tensor<T> t(shape);
    std::memcpy(t.data.data(), arr.data(), t.data.size() * sizeof(T));
    return t;
}

Dtype parse_dtype(const std::string& s) {
    if (s == "f32" || s == "float32") return Dtype::f32;
    if (s == "f64" || s == "float64") return Dtype::f64;
    throw py::value_error("dtype must be f32/float32 or f64/float64, got '" + s + "'");
}

Shape4 shape_from_tuple(const std::vector<int64_t>& dims) {
    if (dims.size() != 4)
        throw py::value_error("shape must have 4 dims (n, c, h, w), got " +
                              std::to_string(dims.size()));
    return Shape4{dims[0], dims[1], dims[2], dims[3]};
}

template <Scalar T>
py::dict grads_to_dict(const FusionGrads<T>& g) {
    py::dict d;
    d["base"] = to_array(g.base);
    d["refined"] = to_array(g.refined);
    d["conv_weights"] = to_array(g.conv_weights);
    d["conv_bias"] = vec_to_array(g.conv_bias);
    return d;
}

// dtype-erased module wrappers ------------------------------------------------

struct PyAgf {
    std::variant<AgfModule<float>, AgfModule<double>> m;

    static PyAgf zeros(int64_t channels, int64_t k, const std::string& dtype) {
        if (parse_dtype(dtype) == Dtype::f32)
            return {AgfModule<float>::zeros(channels, k)};
        return {AgfModule<double>::zeros(channels, k)};
    }
    static PyAgf seeded_uniform(int64_t channels, int64_t k, double scale, uint64_t seed,
                                const std::string& dtype) {
        if (parse_dtype(dtype) == Dtype::f32)
            return {AgfModule<float>::seeded_uniform(channels, k, scale, seed)};
        return {AgfModule<double>::seeded_uniform(channels, k, scale, seed)};
    }
    static PyAgf load(const std::string& path) {
        const ManifestInfo info = read_manifest(path);
        if (npy::peek(info.weights_path).dtype == Dtype::f32)
            return {load_agf<float>(path)};
        return {load_agf<double>(path)};
    }

    std::string dtype() const { return m.index() == 0 ? "f32" : "f64"; }
    int64_t channels() const {
        return std::visit([](const auto& mm) { return mm.channels; }, m);
    }
    int64_t kernel_size() const {
        return std::visit([](const auto& mm) { return mm.attn_conv.weights.shape.h; }, m);
    }
    void save(const std::string& path) const {
        std::visit([&](const auto& mm) { save_params(mm, path); }, m);
    }
    py::tuple forward(const py::array& base, const py::array& refined) const {
        return std::visit(
            [&](const auto& mm) -> py::tuple {
                using T = typename std::decay_t<decltype(mm)>::value_type;
                const auto out = agf_forward(mm, from_array<T>(base, "base"),
                                             from_array<T>(refined, "refined"));
                return py::make_tuple(to_array(out.fused), to_array(out.maps));
            },
            m);
    }
    py::dict backward(const py::array& base, const py::array& refined,
                      const py::array& grad_out) const {
        return std::visit(
            [&](const auto& mm) {
                using T = typename std::decay_t<decltype(mm)>::value_type;
                return grads_to_dict(agf_backward(mm, from_array<T>(base, "base"),
                                                  from_array<T>(refined, "refined"),
                                                  from_array<T>(grad_out, "grad_out")));
            },
            m);
    }
    py::array weights() const {
        return std::visit([](const auto& mm) -> py::array { return to_array(mm.attn_conv.weights); }, m);
    }
    py::array bias() const {
        return std::visit([](const auto& mm) -> py::array { return vec_to_array(mm.attn_conv.bias); }, m);
    }
};

struct PyDsf {
    std::variant<DsfModule<float>, DsfModule<double>> m;

    static PyDsf zeros(const std::string& dtype) {
        if (parse_dtype(dtype) == Dtype::f32) return {DsfModule<float>::zeros()};
        return {DsfModule<double>::zeros()};
    }
    static PyDsf seeded_uniform(double scale, uint64_t seed, const std::string& dtype) {
        if (parse_dtype(dtype) == Dtype::f32)
            return {DsfModule<float>::seeded_uniform(scale, seed)};
        return {DsfModule<double>::seeded_uniform(scale, seed)};
    }
    static PyDsf load(const std::string& path) {
        const ManifestInfo info = read_manifest(path);
        if (npy::peek(info.weights_path).dtype == Dtype::f32)
            return {load_dsf<float>(path)};
        return {load_dsf<double>(path)};
    }

    std::string dtype() const { return m.index() == 0 ? "f32" : "f64"; }
    void save(const std::string& path) const {
        std::visit([&](const auto& mm) { save_params(mm, path); }, m);
    }
    py::tuple forward(const py::array& base, const py::array& refined) const {
        return std::visit(
            [&](const auto& mm) -> py::tuple {
                using T = typename std::decay_t<decltype(mm)>::value_type;
                const auto out = dsf_forward(mm, from_array<T>(base, "base"),
                                             from_array<T>(refined, "refined"));
                return py::make_tuple(to_array(out.fused), to_array(out.maps));
            },
            m);
    }
    py::dict backward(const py::array& base, const py::array& refined,
                      const py::array& grad_out) const {
        return std::visit(
            [&](const auto& mm) {
                using T = typename std::decay_t<decltype(mm)>::value_type;
                return grads_to_dict(dsf_backward(mm, from_array<T>(base, "base"),
                                                  from_array<T>(refined, "refined"),
                                                  from_array<T>(grad_out, "grad_out")));
            },
            m);
    }
    py::array weights() const {
        return std::visit([](const auto& mm) -> py::array { return to_array(mm.spatial_conv.weights); }, m);
    }
    py::array bias() const {
        return std::visit([](const auto& mm) -> py::array { return vec_to_array(mm.spatial_conv.bias); }, m);
    }
};

// free functions --------------------------------------------------------------

py::object py_generate(const std::string& kind, const std::vector<int64_t>& shape,
                       uint64_t seed, double amplitude, const std::string& dtype) {
    SynthSpec spec{parse_synth_kind(kind), shape_from_tuple(shape), seed, amplitude};
    if (parse_dtype(dtype) == Dtype::f32) return to_array(generate<float>(spec));
    return to_array(generate<double>(spec));
}

py::tuple py_generate_pair(const std::string& kind, const std::vector<int64_t>& shape,
                           uint64_t seed, double amplitude, const std::string& dtype) {
    SynthSpec spec{parse_synth_kind(kind), shape_from_tuple(shape), seed, amplitude};
    if (parse_dtype(dtype) == Dtype::f32) {
        const auto [b, r] = generate_pair<float>(spec);
        return py::tuple(py::make_tuple(to_array(b), to_array(r)));
    }
    const auto [b, r] = generate_pair<double>(spec);
    return py::make_tuple(to_array(b), to_array(r));
}

py::array py_read_latent(const std::string& path) {
    return std::visit([](const auto& t) -> py::array { return to_array(t); },
                      read_latent(path));
}

void py_write_latent(const std::string& path, const py::array& a, int rank) {
    if (py::isinstance<py::array_t<float>>(a))
        write_latent(from_array<float>(a, "array"), path, rank);
    else if (py::isinstance<py::array_t<double>>(a))
        write_latent(from_array<double>(a, "array"), path, rank);
    else
        throw py::type_error("array must be float32 or float64");
}

template <Scalar T>
py::array conv2d_typed(const py::array& x, const py::array& weights, const py::array& bias,
                       bool fast) {
    auto b = py::array_t<T, py::array::c_style>::ensure(bias);
    if (!b || b.ndim() != 1) throw py::value_error("bias must be a 1-d array of the same dtype");
    Conv2dParams<T> p{from_array<T>(weights, "weights"),
                      std::vector<T>(b.data(), b.data() + b.shape(0))};
    const Tensor<T> xin = from_array<T>(x, "x");
    return to_array(fast ? conv2d_fast(xin, p) : conv2d_naive(xin, p));
}

py::array py_conv2d(const py::array& x, const py::array& weights, const py::array& bias,
                    const std::string& impl) {
    const bool fast = impl == "fast";
    if (!fast && impl != "naive") throw py::value_error("impl must be 'naive' or 'fast'");
    if (py::isinstance<py::array_t<float>>(x)) return conv2d_typed<float>(x, weights, bias, fast);
    if (py::isinstance<py::array_t<double>>(x)) return conv2d_typed<double>(x, weights, bias, fast);
    throw py::type_error("x must be float32 or float64");
}

py::dict py_gradcheck(const std::string& method, const std::vector<int64_t>& shape,
                      uint64_t seed, double eps, double threshold, int64_t k_agf) {
    const FusionMethod m = [&] {
        if (method == "agf") return FusionMethod::agf;
        if (method == "dsf") return FusionMethod::dsf;
        throw py::value_error("method must be 'agf' or 'dsf'");
    }();
    const GradCheckReport rep =
        check_module(m, k_agf, shape_from_tuple(shape), seed, eps, threshold);
    py::list entries;
    for (const GradEntry& e : rep.entries) {
        py::dict d;
        d["tensor"] = e.name;
        d["count"] = e.count;
        d["max_rel_err"] = e.max_rel_err;
        d["max_abs_err"] = e.max_abs_err;
        d["worst_index"] = e.worst_index;
        d["pass"] = e.pass;
        entries.append(d);
    }
    py::dict out;
    out["entries"] = entries;
    out["eps"] = rep.eps;
    out["threshold"] = rep.threshold;
    out["jitter_applied"] = rep.jitter_applied;
    out["pass"] = rep.pass;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
    mod.doc() = "dual-latent fusion core (AGF / DSF over NCHW latents)";
    mod.attr("__version__") = kVersion;

    // translators run newest-first, so the NpyError one must outrank its
    // IoError base or every NpyError would surface as a bare IoError
    py::register_exception<ShapeError>(mod, "ShapeError", PyExc_ValueError);
    py::register_exception<ConfigError>(mod, "ConfigError", PyExc_ValueError);
    py::register_exception<ManifestError>(mod, "ManifestError", PyExc_ValueError);
    py::register_exception<IoError>(mod, "IoError", PyExc_OSError);
    py::register_exception<NpyError>(mod, "NpyFormatError", PyExc_ValueError);

    mod.def("generate", &py_generate, py::arg("kind"), py::arg("shape"), py::arg("seed") = 0,
            py::arg("amplitude") = 1.0, py::arg("dtype") = "f32",
            "Seeded synthetic latent (noise|lowfreq|highfreq|structured-pair).");
    mod.def("generate_pair", &py_generate_pair, py::arg("kind"), py::arg("shape"),
            py::arg("seed") = 0, py::arg("amplitude") = 1.0, py::arg("dtype") = "f32",
            "Seeded (base, refined) latent pair.");
    mod.def("read_latent", &py_read_latent, py::arg("path"),
            "Read a .npy latent as a 4-d NCHW array (rank promoted on the left).");
    mod.def("write_latent", &py_write_latent, py::arg("path"), py::arg("array"),
            py::arg("rank") = 4, "Write a 4-d NCHW array as .npy with the given storage rank.");
    mod.def("conv2d", &py_conv2d, py::arg("x"), py::arg("weights"), py::arg("bias"),
            py::arg("impl") = "fast", "Same-padded 2-d convolution over NCHW.");
    mod.def("gradcheck", &py_gradcheck, py::arg("method"), py::arg("shape"),
            py::arg("seed") = 1, py::arg("eps") = 1e-5, py::arg("threshold") = 1e-6,
            py::arg("k_agf") = 1, "Analytic vs central-difference gradients (float64).");
    mod.def("num_threads", &num_threads);
    mod.def("set_num_threads", &set_num_threads, py::arg("n"));

    py::class_<PyAgf>(mod, "Agf", "Adaptive global fusion: conv over the channel concat, "
                                  "channel softmax, convex blend.")
        .def_static("zeros", &PyAgf::zeros, py::arg("channels"), py::arg("k") = 1,
                    py::arg("dtype") = "f32")
        .def_static("seeded_uniform", &PyAgf::seeded_uniform, py::arg("channels"),
                    py::arg("k"), py::arg("scale"), py::arg("seed"), py::arg("dtype") = "f32")
        .def_static("load", &PyAgf::load, py::arg("manifest_path"))
        .def("save", &PyAgf::save, py::arg("manifest_path"))
        .def_property_readonly("dtype", &PyAgf::dtype)
        .def_property_readonly("channels", &PyAgf::channels)
        .def_property_readonly("kernel_size", &PyAgf::kernel_size)
        .def_property_readonly("weights", &PyAgf::weights)
        .def_property_readonly("bias", &PyAgf::bias)
        .def("forward", &PyAgf::forward, py::arg("base"), py::arg("refined"),
             "Returns (fused, maps); maps holds the two softmax weight planes.")
        .def("backward", &PyAgf::backward, py::arg("base"), py::arg("refined"),
             py::arg("grad_out"));

    py::class_<PyDsf>(mod, "Dsf", "Dynamic spatial fusion: channel pooling, 7x7 conv, "
                                  "sigmoid gate, blend.")
        .def_static("zeros", &PyDsf::zeros, py::arg("dtype") = "f32")
        .def_static("seeded_uniform", &PyDsf::seeded_uniform, py::arg("scale"),
                    py::arg("seed"), py::arg("dtype") = "f32")
        .def_static("load", &PyDsf::load, py::arg("manifest_path"))
        .def("save", &PyDsf::save, py::arg("manifest_path"))
        .def_property_readonly("dtype", &PyDsf::dtype)
        .def_property_readonly("weights", &PyDsf::weights)
        .def_property_readonly("bias", &PyDsf::bias)
        .def("forward", &PyDsf::forward, py::arg("base"), py::arg("refined"),
             "Returns (fused, maps); maps holds the sigmoid gate plane.")
        .def("backward", &PyDsf::backward, py::arg("base"), py::arg("refined"),
             py::arg("grad_out"));
}
