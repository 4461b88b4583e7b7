# mypy: ignore-errors

import struct

import numpy as np
import pytest

from tinylcn import dten
from tinylcn.tensor import random_tensor


def test_header_layout():
    t = np.arange(6, dtype=np.float64).reshape(1, 2, 3, 1)
    raw = dten.encode_tensor(t)
    assert raw[:4] == b"DTEN"
    assert struct.unpack("<I", raw[4:8])[0] == 1
    assert raw[8] == 1
    assert raw[9] == 4
    assert struct.unpack("<4Q", raw[10:42]) == (1, 2, 3, 1)
    assert len(raw) == 42 + 6 * 8
    np.testing.assert_array_equal(np.frombuffer(raw[42:], dtype="<f8"), np.arange(6))


def test_roundtrip_is_bit_exact(tmp_path):
    t = random_tensor(5, (2, 3, 4, 5))
    path = tmp_path / "t.dten"
    dten.write_tensor(path, t)
    back = dten.read_tensor(path)
    assert back.shape == t.shape
    assert np.asarray(back).tobytes() == np.asarray(t).tobytes()


def test_single_precision():
    t = np.random.default_rng(1).normal(size=(1, 2, 3, 3)).astype(np.float32)
    raw = dten.encode_tensor(t, dtype="f32")
    assert raw[8] == 0
    back = dten.decode_tensor(raw)
    assert back.dtype == np.float64
    np.testing.assert_array_equal(back, t.astype(np.float64))


def test_bad_magic():
    raw = bytearray(dten.encode_tensor(np.ones((1, 1, 1, 1))))
    raw[:4] = b"XXXX"
    with pytest.raises(dten.BadMagicError):
        dten.decode_tensor(bytes(raw))
    with pytest.raises(dten.BadMagicError):
        dten.decode_tensor(b"XX")


def test_truncated_payload():
    t = np.arange(10, dtype=np.float64).reshape(1, 1, 2, 5)
    raw = dten.encode_tensor(t)
    with pytest.raises(dten.TruncatedPayloadError):
        dten.decode_tensor(raw[:-8])
    with pytest.raises(dten.TruncatedPayloadError):
        dten.decode_tensor(raw[:20])


def test_unsupported_dtype():
    raw = bytearray(dten.encode_tensor(np.ones((1, 1, 1, 1))))
    raw[8] = 7
    with pytest.raises(dten.UnsupportedDTypeError):
        dten.decode_tensor(bytes(raw))
    with pytest.raises(dten.UnsupportedDTypeError):
        dten.encode_tensor(np.ones((1, 1, 1, 1)), dtype="f16")


def test_errors_are_distinct():
    assert issubclass(dten.BadMagicError, dten.TensorFormatError)
    assert issubclass(dten.TensorFormatError, ValueError)
    assert not issubclass(dten.BadMagicError, dten.TruncatedPayloadError)
