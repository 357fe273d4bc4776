#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "latfuse/errors.hpp"
#include "latfuse/fusion.hpp"
#include "latfuse/npy.hpp"

namespace latfuse {

// Weights live in a small JSON manifest next to two NPY tensor files:
//   {"method": "agf"|"dsf", "channels": C, "kernel_size": k,
//    "files": {"weights": <path>, "bias": <path>}}
// Relative file paths are resolved against the manifest's directory. For
// DSF, channels records the latent width the weights were made for, or 0
// when unconstrained (the module itself works for any C).

struct ManifestInfo {
    FusionMethod method = FusionMethod::agf;
    int64_t channels = 0;
    int64_t kernel_size = 0;
    std::string weights_path;  // resolved
    std::string bias_path;     // resolved
};

// Parses and schema-checks the JSON; does not touch the tensor files.
ManifestInfo read_manifest(const std::string& path);

// `weights_file` / `bias_file` are written into the JSON as given.
void write_manifest(const std::string& path, FusionMethod method, int64_t channels,
                    int64_t kernel_size, const std::string& weights_file,
                    const std::string& bias_file);

// Sibling tensor names for a manifest path: "<stem>.weights.npy" and
// "<stem>.bias.npy" in the manifest's directory.
std::pair<std::string, std::string> manifest_sibling_names(const std::string& manifest_path);
std::string sibling_path(const std::string& manifest_path, const std::string& name);

namespace detail {

template <Scalar T>
Conv2dParams<T> load_conv(const ManifestInfo& info, int64_t want_in, int64_t want_out) {
    npy::AnyArray wany = npy::read(info.weights_path);
    auto* warr = std::get_if<npy::Array<T>>(&wany);
    if (!warr)
        throw ManifestError(info.weights_path + " holds " +
                            dtype_name(std::holds_alternative<npy::Array<float>>(wany)
                                           ? Dtype::f32
                                           : Dtype::f64) +
                            " weights but " + dtype_name(dtype_of<T>()) + " was requested");
    if (warr->shape.size() != 4)
        throw ShapeError("manifest weights must be rank 4, got rank " +
                         std::to_string(warr->shape.size()) + " in " + info.weights_path);
    const Shape4 ws{warr->shape[0], warr->shape[1], warr->shape[2], warr->shape[3]};
    if (ws.n != want_out || ws.c != want_in || ws.h != info.kernel_size ||
        ws.w != info.kernel_size)
        throw ShapeError("manifest declares " + std::string(fusion_method_name(info.method)) +
                         " with in_channels " + std::to_string(want_in) + ", out_channels " +
                         std::to_string(want_out) + ", kernel " +
                         std::to_string(info.kernel_size) + " but " + info.weights_path +
                         " holds " + ws.str());

    npy::AnyArray bany = npy::read(info.bias_path);
    auto* barr = std::get_if<npy::Array<T>>(&bany);
    if (!barr)
        throw ManifestError(info.bias_path + ": bias dtype does not match weights dtype");
    if (barr->shape.size() != 1 || barr->shape[0] != want_out)
        throw ShapeError("manifest bias must be rank 1 with " + std::to_string(want_out) +
                         " entries, mismatch in " + info.bias_path);

    Conv2dParams<T> p{Tensor<T>{ws, std::move(warr->data)}, std::move(barr->data)};
    p.validate();
    return p;
}

template <Scalar T>
void save_conv(const Conv2dParams<T>& p, const std::string& manifest_path,
               FusionMethod method, int64_t channels) {
    const auto [wname, bname] = manifest_sibling_names(manifest_path);
    npy::write(sibling_path(manifest_path, wname),
               {p.weights.shape.n, p.weights.shape.c, p.weights.shape.h, p.weights.shape.w},
               p.weights.data);
    npy::write(sibling_path(manifest_path, bname), {p.out_channels()}, p.bias);
    write_manifest(manifest_path, method, channels, p.kernel_size(), wname, bname);
}

}  // namespace detail

template <Scalar T>
void save_params(const AgfModule<T>& m, const std::string& manifest_path) {
    m.validate();
    detail::save_conv(m.attn_conv, manifest_path, FusionMethod::agf, m.channels);
}

template <Scalar T>
void save_params(const DsfModule<T>& m, const std::string& manifest_path) {
    m.validate();
    detail::save_conv(m.spatial_conv, manifest_path, FusionMethod::dsf, /*channels=*/0);
}

template <Scalar T>
AgfModule<T> load_agf(const std::string& manifest_path) {
    const ManifestInfo info = read_manifest(manifest_path);
    if (info.method != FusionMethod::agf)
        throw ManifestError(manifest_path + " describes a " +
                            fusion_method_name(info.method) + " module, not agf");
    if (info.channels < 1)
        throw ManifestError(manifest_path + ": agf manifest needs channels >= 1");
    AgfModule<T> m{detail::load_conv<T>(info, 2 * info.channels, 2), info.channels};
    m.validate();
    return m;
}

template <Scalar T>
DsfModule<T> load_dsf(const std::string& manifest_path) {
    const ManifestInfo info = read_manifest(manifest_path);
    if (info.method != FusionMethod::dsf)
        throw ManifestError(manifest_path + " describes a " +
                            fusion_method_name(info.method) + " module, not dsf");
    DsfModule<T> m{detail::load_conv<T>(info, 2, 1)};
    m.validate();
    return m;
}

}  // namespace latfuse
