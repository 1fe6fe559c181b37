import struct

import numpy as np
import pytest

from cones.tensorio import TensorFormatError, decode_tensor, encode_tensor, read_tensor, write_tensor


@pytest.mark.parametrize("shape", [(), (3,), (2, 5), (1, 2, 3, 4)])
def test_roundtrip_bit_exact(tmp_path, shape):
    a = np.random.default_rng(0).standard_normal(shape).astype(np.float32)
    p = tmp_path / "t.cnsf"
    write_tensor(p, a)
    b = read_tensor(p)
    assert b.shape == a.shape and b.tobytes() == a.tobytes()


def test_special_values_survive():
    a = np.array([np.nan, np.inf, -0.0, 1e-45], np.float32)
    assert decode_tensor(encode_tensor(a)).tobytes() == a.tobytes()


def test_truncated_payload(tmp_path):
    buf = encode_tensor(np.zeros((4, 4)))[:-3]
    with pytest.raises(TensorFormatError, match="payload"):
        decode_tensor(buf, "x")


def test_truncated_header():
    with pytest.raises(TensorFormatError, match="truncated header"):
        decode_tensor(b"CNSF\x01")


def test_bad_magic():
    with pytest.raises(TensorFormatError, match="magic"):
        decode_tensor(b"NOPE" + encode_tensor(np.zeros(2))[4:])


def test_bad_version_and_dtype():
    buf = bytearray(encode_tensor(np.zeros(2)))
    struct.pack_into("<I", buf, 4, 9)
    with pytest.raises(TensorFormatError, match="version"):
        decode_tensor(bytes(buf))
    buf = bytearray(encode_tensor(np.zeros(2)))
    struct.pack_into("<I", buf, 8, 7)
    with pytest.raises(TensorFormatError, match="dtype code") as exc:
        decode_tensor(bytes(buf), "f.cnsf")
    assert exc.value.path == "f.cnsf"
