"""CNSF raw tensor files.

Layout: the 4 magic bytes ``CNSF``, then little-endian u32 fields
``version`` (1), ``dtype`` (0 = float32), ``ndim`` and one u32 per
dimension, followed by the row-major little-endian payload.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"CNSF"
VERSION = 1
DTYPE_CODES = {0: np.dtype("<f4")}


class TensorFormatError(ValueError):
    """A CNSF file is malformed (bad magic, version, dtype code or size)."""

    def __init__(self, path, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason


def encode_tensor(array) -> bytes:
    arr = np.asarray(array, dtype="<f4", order="C")  # ascontiguousarray would promote 0-d
    header = MAGIC + struct.pack("<III", VERSION, 0, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes(order="C")


def decode_tensor(buf: bytes, path="<bytes>") -> np.ndarray:
    if len(buf) < 16:
        raise TensorFormatError(path, f"truncated header ({len(buf)} bytes)")
    if buf[:4] != MAGIC:
        raise TensorFormatError(path, f"bad magic {buf[:4]!r}")
    version, code, ndim = struct.unpack_from("<III", buf, 4)
    if version != VERSION:
        raise TensorFormatError(path, f"unsupported version {version}")
    if code not in DTYPE_CODES:
        raise TensorFormatError(path, f"unknown dtype code {code}")
    off = 16
    if len(buf) < off + 4 * ndim:
        raise TensorFormatError(path, "truncated dimension list")
    dims = struct.unpack_from(f"<{ndim}I", buf, off)
    off += 4 * ndim
    dtype = DTYPE_CODES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    payload = buf[off:]
    if len(payload) != expected:
        raise TensorFormatError(path, f"payload is {len(payload)} bytes, expected {expected} for shape {tuple(dims)}")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).astype(np.float32)


def write_tensor(path, array) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(encode_tensor(array))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_tensor(fh.read(), path)
