"""Dual-latent fusion (AGF / DSF) over NCHW latent tensors."""

from ._core import (
    Agf,
    ConfigError,
    Dsf,
    IoError,
    ManifestError,
    NpyFormatError,
    ShapeError,
    __version__,
    conv2d,
    generate,
    generate_pair,
    gradcheck,
    num_threads,
    read_latent,
    set_num_threads,
    write_latent,
)

__all__ = [
    "Agf",
    "ConfigError",
    "Dsf",
    "IoError",
    "ManifestError",
    "NpyFormatError",
    "ShapeError",
    "__version__",
    "conv2d",
    "generate",
    "generate_pair",
    "gradcheck",
    "num_threads",
    "read_latent",
    "set_num_threads",
    "write_latent",
]
