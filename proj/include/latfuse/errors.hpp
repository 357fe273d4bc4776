#pragma once

#include <stdexcept>
#include <string>

namespace latfuse {

// Shape or axis disagreement between tensors, or between a tensor and a
// module's configuration. The message names the offending axis.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration: bad kernel size, bad init spec, element cap
// exceeded, persistent max-pool ties during gradient checking.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// File-level I/O failure (open, read, write).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Rejection reasons for array files. Each malformed input maps to exactly
// one code so tests can pin the reason, not just "failed".
enum class NpyErrorCode {
    bad_magic,
    bad_version,
    bad_header,        // unparseable dict, missing newline, misaligned length
    unsupported_dtype, // anything but little-endian f32/f64
    fortran_order,
    unsupported_rank,  // rank 0 or rank > 4
    zero_dim,
    payload_size,      // truncated or oversized payload
};

const char* npy_error_name(NpyErrorCode code);

class NpyError : public IoError {
public:
    NpyError(NpyErrorCode code, const std::string& msg)
        : IoError(std::string(npy_error_name(code)) + ": " + msg), code_(code) {}
    NpyErrorCode code() const { return code_; }

private:
    NpyErrorCode code_;
};

// Weights manifest problems: missing/corrupt JSON, unknown method, tensor
// files inconsistent with the declared geometry.
class ManifestError : public std::runtime_error {
public:
    explicit ManifestError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace latfuse
