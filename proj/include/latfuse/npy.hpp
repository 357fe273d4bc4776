#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "latfuse/errors.hpp"
#include "latfuse/tensor.hpp"

namespace latfuse {

// NPY v1.0, the subset this library speaks: little-endian f32/f64 payloads,
// C order, rank 1-4. Writes are byte-identical to what numpy produces for
// the same array (dict layout, space padding, 64-byte header alignment), so
// anything written here loads anywhere and vice versa. No pickle, no v2/v3
// headers, no endian conversion.

namespace npy {

struct Header {
    Dtype dtype = Dtype::f32;
    std::vector<int64_t> shape;  // as stored in the file, rank 1..4
    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }
};

template <Scalar T>
struct Array {
    std::vector<int64_t> shape;
    std::vector<T> data;
};

using AnyArray = std::variant<Array<float>, Array<double>>;

// Header of `path` without the payload.
Header peek(const std::string& path);

AnyArray read(const std::string& path);

void write(const std::string& path, const std::vector<int64_t>& shape,
           const std::vector<float>& data);
void write(const std::string& path, const std::vector<int64_t>& shape,
           const std::vector<double>& data);

// Exposed for tests: the exact serialized bytes for a given header.
std::string format_header(Dtype dtype, const std::vector<int64_t>& shape);

}  // namespace npy

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

inline Dtype dtype_of_any(const AnyTensor& t) {
    return std::holds_alternative<Tensor<float>>(t) ? Dtype::f32 : Dtype::f64;
}

// Promotes rank 1-3 files to rank-4 NCHW by left-padding with 1s.
AnyTensor read_latent(const std::string& path);

template <Scalar T>
Tensor<T> read_latent_as(const std::string& path) {
    AnyTensor any = read_latent(path);
    if (auto* t = std::get_if<Tensor<T>>(&any)) return std::move(*t);
    throw NpyError(NpyErrorCode::unsupported_dtype,
                   path + " holds " +
                       dtype_name(dtype_of_any(any)) + " but " +
                       dtype_name(dtype_of<T>()) + " was required");
}

// Writes the trailing `rank` dims; the leading 4-rank dims must all be 1.
template <Scalar T>
void write_latent(const Tensor<T>& t, const std::string& path, int rank = 4) {
    if (rank < 1 || rank > 4)
        throw ConfigError("write_latent: rank must be in [1, 4], got " + std::to_string(rank));
    const int64_t dims[4] = {t.shape.n, t.shape.c, t.shape.h, t.shape.w};
    std::vector<int64_t> shape;
    for (int i = 0; i < 4; ++i) {
        if (i < 4 - rank) {
            if (dims[i] != 1)
                throw ShapeError("write_latent: cannot store " + t.shape.str() +
                                 " at rank " + std::to_string(rank) +
                                 ", leading axes are not 1");
        } else {
            shape.push_back(dims[i]);
        }
    }
    npy::write(path, shape, t.data);
}

}  // namespace latfuse
