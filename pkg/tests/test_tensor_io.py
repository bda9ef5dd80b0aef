import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pweaver import skeleton as sk
from pweaver.tensor_io import (ScoreMapSet, Tensor3, TensorFormatError, argmax_channel,
                               crop_resize, load_tensor, save_tensor)


def roundtrip(t):
    buf = io.BytesIO()
    save_tensor(t, buf)
    buf.seek(0)
    return load_tensor(buf)


def test_zero_tensor_bytes():
    buf = io.BytesIO()
    save_tensor(Tensor3(np.zeros((1, 1, 1))), buf)
    raw = buf.getvalue()
    assert raw == b"PWT1" + struct.pack("<III", 1, 1, 1) + b"\0" * 4


def test_file_size(tmp_path):
    t = Tensor3(np.random.default_rng(0).random((2, 3, 7)))
    save_tensor(t, tmp_path / "t.pwt")
    assert (tmp_path / "t.pwt").stat().st_size == 184
    assert load_tensor(tmp_path / "t.pwt") == t


def test_payload_is_little_endian_row_major():
    data = np.arange(12, dtype=np.float32).reshape(2, 3, 2)
    buf = io.BytesIO()
    save_tensor(Tensor3(data), buf)
    body = np.frombuffer(buf.getvalue()[16:], dtype="<f4")
    assert body.tolist() == list(range(12))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 4)),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_roundtrip_identity(data):
    t = Tensor3(data)
    assert roundtrip(t) == t


@pytest.mark.parametrize("raw, field", [
    (b"PWT", "header"),
    (b"XXXX" + struct.pack("<III", 1, 1, 1) + b"\0" * 4, "magic"),
    (b"PWT1" + struct.pack("<III", 0, 1, 1), "height"),
    (b"PWT1" + struct.pack("<III", 1, 1, 2) + b"\0" * 4, "payload"),
    (b"PWT1" + struct.pack("<III", 1, 1, 1) + struct.pack("<f", float("nan")), "data"),
])
def test_malformed_files_name_the_field(raw, field):
    with pytest.raises(TensorFormatError, match=field):
        load_tensor(io.BytesIO(raw))


def test_tensor_is_immutable():
    t = Tensor3(np.zeros((2, 2, 1)))
    with pytest.raises(ValueError):
        t.data[0, 0, 0] = 1.0


def test_score_map_set_checks_channels_and_dims():
    j = Tensor3(np.zeros((4, 4, sk.NUM_JOINTS)))
    n = Tensor3(np.zeros((4, 4, sk.NUM_NEIGHBOR_CHANNELS)))
    p = Tensor3(np.zeros((4, 4, sk.NUM_PARTS)))
    ScoreMapSet(j, n, p)
    with pytest.raises(ValueError):
        ScoreMapSet(j, n, Tensor3(np.zeros((4, 5, sk.NUM_PARTS))))
    with pytest.raises(ValueError):
        ScoreMapSet(j, Tensor3(np.zeros((4, 4, 10))), p)


def test_argmax_examples():
    px = np.zeros((1, 1, 7))
    px[0, 0, :3] = (0.1, 0.9, 0.0)
    assert argmax_channel(Tensor3(px))[0, 0] == 1
    assert (argmax_channel(Tensor3(np.full((3, 3, 7), 0.4))) == 0).all()


def test_argmax_matches_linear_scan():
    data = np.random.default_rng(3).random((5, 5, 7)).astype(np.float32)
    got = argmax_channel(Tensor3(data))
    for y in range(5):
        for x in range(5):
            best = 0
            for c in range(1, 7):
                if data[y, x, c] > data[y, x, best]:
                    best = c
            assert got[y, x] == best


@settings(max_examples=30, deadline=None)
@given(arrays(np.float32, (3, 4, 7), elements=st.floats(0, 1, width=32)),
       arrays(np.float32, (3, 4, 1), elements=st.sampled_from([-2.0, 0.5, 4.0])))
def test_argmax_invariant_to_per_pixel_shift(data, shift):
    assert (argmax_channel(data) == argmax_channel(data + shift)).all()


def test_crop_resize_identity():
    t = Tensor3(np.random.default_rng(1).random((6, 5, 3)))
    assert crop_resize(t, (0, 0, 5, 6), 6, 5) == t


def test_crop_resize_bilinear_center():
    t = Tensor3(np.array([[0.0, 0.0], [0.0, 4.0]]))
    out = crop_resize(t, (0, 0, 2, 2), 3, 3)
    assert out.data[1, 1, 0] == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 8), st.floats(-3, 8), st.floats(0.5, 12), st.floats(0.5, 12),
       st.integers(1, 9), st.integers(1, 9))
def test_crop_resize_constant_and_bounded(x, y, w, h, oh, ow):
    if x >= 10 or y >= 8 or x + w <= 0 or y + h <= 0:
        return
    const = Tensor3(np.full((8, 10, 2), 0.37))
    assert np.allclose(crop_resize(const, (x, y, w, h), oh, ow).data, np.float32(0.37))
    rnd = Tensor3(np.random.default_rng(7).random((8, 10, 2)))
    out = crop_resize(rnd, (x, y, w, h), oh, ow).data
    assert out.min() >= rnd.data.min() - 1e-6 and out.max() <= rnd.data.max() + 1e-6


def test_crop_resize_rejects_disjoint_box():
    with pytest.raises(ValueError):
        crop_resize(Tensor3(np.zeros((4, 4, 1))), (10, 10, 2, 2), 2, 2)
