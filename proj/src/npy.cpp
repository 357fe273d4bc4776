#include "latfuse/npy.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "payloads are stored little-endian and read without conversion");

namespace latfuse {

const char* npy_error_name(NpyErrorCode code) {
    switch (code) {
        case NpyErrorCode::bad_magic: return "bad magic";
        case NpyErrorCode::bad_version: return "bad version";
        case NpyErrorCode::bad_header: return "bad header";
        case NpyErrorCode::unsupported_dtype: return "unsupported dtype";
        case NpyErrorCode::fortran_order: return "fortran order";
        case NpyErrorCode::unsupported_rank: return "unsupported rank";
        case NpyErrorCode::zero_dim: return "zero dim";
        case NpyErrorCode::payload_size: return "payload size";
    }
    return "unknown";
}

namespace npy {

namespace {

constexpr char kMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};
constexpr size_t kPreamble = 10;  // magic + version + u16 header length

// Scans the python-dict header for one quoted key and returns the start of
// its value.
size_t find_value(const std::string& dict, const std::string& key,
                  const std::string& path) {
    const std::string quoted = "'" + key + "'";
    const size_t at = dict.find(quoted);
    if (at == std::string::npos)
        throw NpyError(NpyErrorCode::bad_header, path + ": missing key " + quoted);
    size_t pos = at + quoted.size();
    while (pos < dict.size() && (dict[pos] == ' ' || dict[pos] == ':')) ++pos;
    return pos;
}

Header parse_dict(const std::string& dict, const std::string& path) {
    Header h;

    size_t pos = find_value(dict, "descr", path);
    if (pos >= dict.size() || dict[pos] != '\'')
        throw NpyError(NpyErrorCode::bad_header, path + ": descr is not a string");
    const size_t end = dict.find('\'', pos + 1);
    if (end == std::string::npos)
        throw NpyError(NpyErrorCode::bad_header, path + ": unterminated descr");
    const std::string descr = dict.substr(pos + 1, end - pos - 1);
    if (descr == "<f4") {
        h.dtype = Dtype::f32;
    } else if (descr == "<f8") {
        h.dtype = Dtype::f64;
    } else {
        throw NpyError(NpyErrorCode::unsupported_dtype,
                       path + ": descr '" + descr + "' (supported: '<f4', '<f8')");
    }

    pos = find_value(dict, "fortran_order", path);
    if (dict.compare(pos, 5, "False") == 0) {
        // C order, fine
    } else if (dict.compare(pos, 4, "True") == 0) {
        throw NpyError(NpyErrorCode::fortran_order, path);
    } else {
        throw NpyError(NpyErrorCode::bad_header, path + ": fortran_order is not a bool");
    }

    pos = find_value(dict, "shape", path);
    if (pos >= dict.size() || dict[pos] != '(')
        throw NpyError(NpyErrorCode::bad_header, path + ": shape is not a tuple");
    const size_t close = dict.find(')', pos);
    if (close == std::string::npos)
        throw NpyError(NpyErrorCode::bad_header, path + ": unterminated shape tuple");
    std::string tuple = dict.substr(pos + 1, close - pos - 1);
    std::istringstream ts(tuple);
    std::string item;
    while (std::getline(ts, item, ',')) {
        const size_t first = item.find_first_not_of(" \t");
        if (first == std::string::npos) continue;  // trailing comma
        const size_t last = item.find_last_not_of(" \t");
        try {
            h.shape.push_back(std::stoll(item.substr(first, last - first + 1)));
        } catch (const std::exception&) {
            throw NpyError(NpyErrorCode::bad_header, path + ": bad shape entry '" + item + "'");
        }
    }

    if (h.shape.empty() || h.shape.size() > 4)
        throw NpyError(NpyErrorCode::unsupported_rank,
                       path + ": rank " + std::to_string(h.shape.size()) +
                           " (supported: 1-4)");
    for (int64_t d : h.shape)
        if (d < 1)
            throw NpyError(NpyErrorCode::zero_dim,
                           path + ": dimension " + std::to_string(d));
    return h;
}

// Reads and validates preamble + dict; returns the header and the offset of
// the payload. The stream is left positioned at the payload.
Header read_header_stream(std::ifstream& in, const std::string& path, size_t* payload_at) {
    char preamble[kPreamble];
    if (!in.read(preamble, kPreamble))
        throw NpyError(NpyErrorCode::bad_magic, path + ": file shorter than the preamble");
    if (std::memcmp(preamble, kMagic, 6) != 0)
        throw NpyError(NpyErrorCode::bad_magic, path);
    const unsigned major = static_cast<unsigned char>(preamble[6]);
    const unsigned minor = static_cast<unsigned char>(preamble[7]);
    if (major != 1 || minor != 0)
        throw NpyError(NpyErrorCode::bad_version,
                       path + ": version " + std::to_string(major) + "." +
                           std::to_string(minor) + " (supported: 1.0)");
    const size_t header_len = static_cast<unsigned char>(preamble[8]) |
                              (static_cast<size_t>(static_cast<unsigned char>(preamble[9])) << 8);
    if ((kPreamble + header_len) % 16 != 0)
        throw NpyError(NpyErrorCode::bad_header,
                       path + ": header length " + std::to_string(header_len) +
                           " is not 16-byte aligned");
    std::string dict(header_len, '\0');
    if (!in.read(dict.data(), static_cast<std::streamsize>(header_len)))
        throw NpyError(NpyErrorCode::bad_header, path + ": truncated header");
    if (dict.back() != '\n')
        throw NpyError(NpyErrorCode::bad_header, path + ": header does not end in newline");
    *payload_at = kPreamble + header_len;
    return parse_dict(dict, path);
}

template <Scalar T>
Array<T> read_payload(std::ifstream& in, const Header& h, const std::string& path,
                      size_t payload_at) {
    in.seekg(0, std::ios::end);
    const int64_t file_size = static_cast<int64_t>(in.tellg());
    const int64_t expected = h.numel() * static_cast<int64_t>(sizeof(T));
    const int64_t actual = file_size - static_cast<int64_t>(payload_at);
    if (actual != expected)
        throw NpyError(NpyErrorCode::payload_size,
                       path + ": expected " + std::to_string(expected) +
                           " payload bytes, found " + std::to_string(actual));
    Array<T> arr;
    arr.shape = h.shape;
    arr.data.resize(static_cast<size_t>(h.numel()));
    in.seekg(static_cast<std::streamoff>(payload_at));
    if (!in.read(reinterpret_cast<char*>(arr.data.data()), expected))
        throw IoError(path + ": payload read failed");
    return arr;
}

template <Scalar T>
void write_impl(const std::string& path, const std::vector<int64_t>& shape,
                const std::vector<T>& data) {
    if (shape.empty() || shape.size() > 4)
        throw ConfigError("npy::write: rank must be 1-4, got " + std::to_string(shape.size()));
    int64_t numel = 1;
    for (int64_t d : shape) {
        if (d < 1) throw ConfigError("npy::write: dimensions must be >= 1");
        numel *= d;
    }
    if (numel != static_cast<int64_t>(data.size()))
        throw ShapeError("npy::write: data length " + std::to_string(data.size()) +
                         " does not match shape element count " + std::to_string(numel));

    const std::string header = format_header(dtype_of<T>(), shape);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(T)));
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace

std::string format_header(Dtype dtype, const std::vector<int64_t>& shape) {
    std::ostringstream dict;
    dict << "{'descr': '" << (dtype == Dtype::f32 ? "<f4" : "<f8")
         << "', 'fortran_order': False, 'shape': (";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) dict << ", ";
        dict << shape[i];
    }
    if (shape.size() == 1) dict << ",";
    dict << "), }";

    // Pad with spaces, newline last, total length a multiple of 64. That is
    // the modern numpy layout (and a multiple of the v1.0 requirement of 16).
    std::string d = dict.str();
    const size_t total = ((kPreamble + d.size() + 1 + 63) / 64) * 64;
    d.append(total - kPreamble - d.size() - 1, ' ');
    d.push_back('\n');

    std::string out(kMagic, 6);
    out.push_back('\x01');
    out.push_back('\x00');
    const size_t header_len = d.size();
    out.push_back(static_cast<char>(header_len & 0xff));
    out.push_back(static_cast<char>((header_len >> 8) & 0xff));
    out += d;
    return out;
}

Header peek(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    size_t payload_at = 0;
    return read_header_stream(in, path, &payload_at);
}

AnyArray read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    size_t payload_at = 0;
    const Header h = read_header_stream(in, path, &payload_at);
    if (h.dtype == Dtype::f32) return read_payload<float>(in, h, path, payload_at);
    return read_payload<double>(in, h, path, payload_at);
}

void write(const std::string& path, const std::vector<int64_t>& shape,
           const std::vector<float>& data) {
    write_impl(path, shape, data);
}

void write(const std::string& path, const std::vector<int64_t>& shape,
           const std::vector<double>& data) {
    write_impl(path, shape, data);
}

}  // namespace npy

namespace {

Shape4 promote_shape(const std::vector<int64_t>& stored) {
    int64_t dims[4] = {1, 1, 1, 1};
    const size_t offset = 4 - stored.size();
    for (size_t i = 0; i < stored.size(); ++i) dims[offset + i] = stored[i];
    return Shape4{dims[0], dims[1], dims[2], dims[3]};
}

}  // namespace

AnyTensor read_latent(const std::string& path) {
    npy::AnyArray arr = npy::read(path);
    if (auto* a = std::get_if<npy::Array<float>>(&arr))
        return Tensor<float>(promote_shape(a->shape), std::move(a->data));
    auto& a = std::get<npy::Array<double>>(arr);
    return Tensor<double>(promote_shape(a.shape), std::move(a.data));
}

}  // namespace latfuse
