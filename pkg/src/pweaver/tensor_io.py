"""Dense score-map containers, the PWT1 file format and raster resampling."""

import struct
from dataclasses import dataclass

import numpy as np

from .skeleton import NUM_JOINTS, NUM_NEIGHBOR_CHANNELS, NUM_PARTS

MAGIC = b"PWT1"
_HEADER = struct.Struct("<4sIII")


class TensorFormatError(ValueError):
    """Raised when a tensor stream is malformed."""


class Tensor3:
    """Immutable H x W x C float32 array.

    Offsets stored in the neighbor map are in pixels of the grid they live on;
    resampling a neighbor map to another scale must rescale them.
    """

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"expected a 3-d array, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"all dimensions must be >= 1, got {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        self._data = arr

    @property
    def data(self):
        return self._data

    @property
    def height(self):
        return self._data.shape[0]

    @property
    def width(self):
        return self._data.shape[1]

    @property
    def channels(self):
        return self._data.shape[2]

    @property
    def shape(self):
        return self._data.shape

    def __eq__(self, other):
        if not isinstance(other, Tensor3):
            return NotImplemented
        return (self.shape == other.shape
                and self._data.tobytes() == other._data.tobytes())

    def __repr__(self):
        return f"Tensor3({self.height}x{self.width}x{self.channels})"


@dataclass(frozen=True)
class ScoreMapSet:
    joints: Tensor3
    neighbors: Tensor3
    parts: Tensor3

    def __post_init__(self):
        if self.joints.channels != NUM_JOINTS:
            raise ValueError("joint map must have 14 channels")
        if self.neighbors.channels != NUM_NEIGHBOR_CHANNELS:
            raise ValueError("neighbor map must have 364 channels")
        if self.parts.channels != NUM_PARTS:
            raise ValueError("part map must have 7 channels")
        dims = {t.shape[:2] for t in (self.joints, self.neighbors, self.parts)}
        if len(dims) != 1:
            raise ValueError(f"score maps disagree on height/width: {sorted(dims)}")

    @property
    def height(self):
        return self.joints.height

    @property
    def width(self):
        return self.joints.width


def save_tensor(t, dest):
    """Write `t` to a path or binary file object."""
    header = _HEADER.pack(MAGIC, t.height, t.width, t.channels)
    payload = t.data.astype("<f4", copy=False).tobytes()
    if hasattr(dest, "write"):
        dest.write(header)
        dest.write(payload)
    else:
        with open(dest, "wb") as fh:
            fh.write(header)
            fh.write(payload)


def load_tensor(source):
    if hasattr(source, "read"):
        raw = source.read()
    else:
        with open(source, "rb") as fh:
            raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TensorFormatError(f"header: need {_HEADER.size} bytes, got {len(raw)}")
    magic, h, w, c = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise TensorFormatError(f"magic: expected {MAGIC!r}, got {magic!r}")
    for name, v in (("height", h), ("width", w), ("channels", c)):
        if v < 1:
            raise TensorFormatError(f"{name}: must be >= 1, got {v}")
    expected = h * w * c * 4
    body = raw[_HEADER.size:]
    if len(body) != expected:
        raise TensorFormatError(
            f"payload: expected {expected} bytes for {h}x{w}x{c}, got {len(body)}")
    data = np.frombuffer(body, dtype="<f4").reshape(h, w, c)
    if not np.isfinite(data).all():
        raise TensorFormatError("data: contains NaN or Inf")
    return Tensor3(data.astype(np.float32))


def argmax_channel(t):
    """Per-pixel channel argmax; ties resolve to the lowest channel."""
    data = t.data if isinstance(t, Tensor3) else np.asarray(t)
    return np.argmax(data, axis=2).astype(np.int64)


def _sample_axis(start, extent, n_out, n_src):
    # pixel-centre convention: output pixel i covers [i, i+1) of the output grid
    pos = start + (np.arange(n_out) + 0.5) * (extent / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_src - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_src - 1)
    frac = (pos - lo).astype(np.float32)
    return lo, hi, frac


def crop_resize(t, box, out_h, out_w):
    """Bilinearly resample the rectangle `box` = (x, y, w, h) of `t` to out_h x out_w.

    The box is in continuous pixel coordinates (pixel i spans [i, i+1)).
    Samples falling outside the tensor clamp to the nearest valid pixel.
    """
    x, y, w, h = (float(v) for v in box)
    if w <= 0 or h <= 0:
        raise ValueError(f"empty box {box}")
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be >= 1")
    if x >= t.width or y >= t.height or x + w <= 0 or y + h <= 0:
        raise ValueError(f"box {box} does not intersect a {t.height}x{t.width} tensor")
    y0, y1, fy = _sample_axis(y, h, out_h, t.height)
    x0, x1, fx = _sample_axis(x, w, out_w, t.width)
    src = t.data
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = src[y0]
    bot = src[y1]
    rows = top * (1 - fy) + bot * fy
    out = rows[:, x0] * (1 - fx) + rows[:, x1] * fx
    return Tensor3(out)


def sample_bilinear(data, xs, ys):
    """Bilinear samples of an H x W x C array at pixel-index points (clamped)."""
    h, w = data.shape[:2]
    xs = np.clip(np.asarray(xs, dtype=np.float64), 0.0, w - 1)
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0.0, h - 1)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0).astype(np.float32)[..., None]
    fy = (ys - y0).astype(np.float32)[..., None]
    # same operation order as crop_resize so point samples match it bitwise
    left = data[y0, x0] * (1 - fy) + data[y1, x0] * fy
    right = data[y0, x1] * (1 - fy) + data[y1, x1] * fy
    return left * (1 - fx) + right * fx
