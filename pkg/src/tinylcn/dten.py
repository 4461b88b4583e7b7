"""
A small binary container for tensors. A ``.dten`` file is a 42-byte header
followed by the row-major payload, all little-endian:

==========  ========  ===============================================
offset      type      content
==========  ========  ===============================================
0           4 bytes   magic ``b"DTEN"``
4           u32       format version, currently ``1``
8           u8        dtype code: ``0`` for float32, ``1`` for float64
9           u8        number of axes, always ``4``
10          4 x u64   extents ``(n, c, h, w)``
42          ...       payload, ``n * c * h * w`` elements
==========  ========  ===============================================

Single precision files are widened to float64 on load; writing in float64
and reading back is bit-exact.
"""

from __future__ import annotations

__all__ = [
    "TensorFormatError",
    "BadMagicError",
    "TruncatedPayloadError",
    "UnsupportedDTypeError",
    "MAGIC",
    "VERSION",
    "encode_tensor",
    "decode_tensor",
    "read_tensor",
    "write_tensor",
]

import os
from typing import Union

import jax.numpy as jnp
import numpy as np

from tinylcn.helpers import JAXArray
from tinylcn.tensor import as_tensor

MAGIC = b"DTEN"
VERSION = 1

_HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("dtype", "u1"),
        ("ndim", "u1"),
        ("dims", "<u8", (4,)),
    ]
)
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {"f32": 0, "f64": 1}

PathLike = Union[str, "os.PathLike[str]"]


class TensorFormatError(ValueError):
    """Raised when a byte string is not a valid tensor file"""


class BadMagicError(TensorFormatError):
    pass


class TruncatedPayloadError(TensorFormatError):
    pass


class UnsupportedDTypeError(TensorFormatError):
    pass


def encode_tensor(t: JAXArray, dtype: str = "f64") -> bytes:
    """Serialize a tensor to bytes

    Args:
        t: The tensor with shape ``(n, c, h, w)``.
        dtype: Either ``"f64"`` (default, lossless) or ``"f32"``.
    """
    if dtype not in _CODES:
        raise UnsupportedDTypeError(f"Unsupported dtype '{dtype}'; use 'f32' or 'f64'")
    code = _CODES[dtype]
    data = np.asarray(as_tensor(t))
    header = np.zeros((), dtype=_HEADER)
    header["magic"] = MAGIC
    header["version"] = VERSION
    header["dtype"] = code
    header["ndim"] = 4
    header["dims"] = data.shape
    payload = np.ascontiguousarray(data, dtype=_DTYPES[code])
    return header.tobytes() + payload.tobytes()


def decode_tensor(raw: bytes) -> JAXArray:
    if len(raw) < _HEADER.itemsize:
        if raw[:4] != MAGIC[: len(raw[:4])]:
            raise BadMagicError(f"Bad magic bytes {raw[:4]!r}; expected {MAGIC!r}")
        raise TruncatedPayloadError(
            f"File holds {len(raw)} bytes; the header alone needs {_HEADER.itemsize}"
        )
    header = np.frombuffer(raw, dtype=_HEADER, count=1)[0]
    if header["magic"] != MAGIC:
        raise BadMagicError(f"Bad magic bytes {header['magic']!r}; expected {MAGIC!r}")
    if header["version"] != VERSION:
        raise TensorFormatError(f"Unsupported format version {header['version']}")
    if int(header["dtype"]) not in _DTYPES:
        raise UnsupportedDTypeError(f"Unsupported dtype code {header['dtype']}")
    if header["ndim"] != 4:
        raise TensorFormatError(f"Expected 4 axes; header declares {header['ndim']}")

    dims = tuple(int(d) for d in header["dims"])
    dtype = _DTYPES[int(header["dtype"])]
    count = int(np.prod(dims))
    available = (len(raw) - _HEADER.itemsize) // dtype.itemsize
    if available < count:
        raise TruncatedPayloadError(
            f"Header declares {count} elements but only {available} are stored"
        )
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=_HEADER.itemsize)
    return as_tensor(jnp.asarray(data.astype(np.float64).reshape(dims)))


def read_tensor(path: PathLike) -> JAXArray:
    with open(path, "rb") as f:
        return decode_tensor(f.read())


def write_tensor(path: PathLike, t: JAXArray, dtype: str = "f64") -> None:
    with open(path, "wb") as f:
        f.write(encode_tensor(t, dtype=dtype))
