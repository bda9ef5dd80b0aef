"""Detection boxes, auto-zoomed regions and per-joint candidate extraction."""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import skeleton as sk
from .geometry import box_iou
from .tensor_io import Tensor3, crop_resize, sample_bilinear

DETECTION_SCORE_THRESHOLD = 0.6
DETECTION_IOU_THRESHOLD = 0.6
JOINT_SCORE_THRESHOLD = 0.2
PROPOSAL_DISTANCE = 16.0
PROPOSALS_PER_TYPE = 6


@dataclass(frozen=True)
class DetectionBox:
    rect: tuple     # x, y, w, h in scene pixels (continuous coordinates)
    score: float = 1.0

    def __post_init__(self):
        x, y, w, h = self.rect
        if not (w > 0 and h > 0):
            raise ValueError(f"detection box must have positive area: {self.rect}")
        if not math.isfinite(self.score):
            raise ValueError("detection score must be finite")

    @property
    def center(self):
        x, y, w, h = self.rect
        # pixel-index coordinates, the frame joints are expressed in
        return (x + w / 2 - 0.5, y + h / 2 - 0.5)


@dataclass(frozen=True)
class Affine:
    """Region -> scene map on continuous coordinates: scene = origin + region / scale."""

    scale: float
    ox: float
    oy: float

    def to_scene(self, x, y):
        return self.ox + x / self.scale, self.oy + y / self.scale

    def to_region(self, x, y):
        return (x - self.ox) * self.scale, (y - self.oy) * self.scale

    # pixel indices sit at the centre of their continuous cell
    def px_to_scene(self, x, y):
        sx, sy = self.to_scene(np.asarray(x) + 0.5, np.asarray(y) + 0.5)
        return sx - 0.5, sy - 0.5

    def px_to_region(self, x, y):
        rx, ry = self.to_region(np.asarray(x) + 0.5, np.asarray(y) + 0.5)
        return rx - 0.5, ry - 0.5


class RegionMaps:
    """Score maps resampled into a region.

    Joint and part maps are materialised eagerly; the 364-channel offset map is
    only resampled when asked for, since feature extraction reads it at a
    handful of points through `offset_at`.
    """

    def __init__(self, scene_maps, box, out_h, out_w, scale):
        self._scene = scene_maps
        self._box = box
        self._scale = scale
        self.height, self.width = out_h, out_w
        self.joints = crop_resize(scene_maps.joints, box, out_h, out_w)
        self.parts = crop_resize(scene_maps.parts, box, out_h, out_w)

    @cached_property
    def neighbors(self):
        t = crop_resize(self._scene.neighbors, self._box, self.height, self.width)
        return Tensor3(t.data * np.float32(self._scale))

    def offset_at(self, x, y, src, dst):
        """(dx, dy) predicted from pixel (x, y) of type `src` towards type `dst`.

        Equal to reading `neighbors` at the nearest integer pixel.
        """
        xi = min(max(int(round(x)), 0), self.width - 1)
        yi = min(max(int(round(y)), 0), self.height - 1)
        bx, by, bw, bh = self._box
        sx = bx + (xi + 0.5) * (bw / self.width) - 0.5
        sy = by + (yi + 0.5) * (bh / self.height) - 0.5
        c = sk.neighbor_channel(src, dst, 0)
        vals = sample_bilinear(self._scene.neighbors.data[:, :, c:c + 2], sx, sy)
        vals = vals * np.float32(self._scale)
        return float(vals[0]), float(vals[1])


@dataclass
class ZoomedRegion:
    source_box: DetectionBox
    scale: float
    maps: RegionMaps
    transform: Affine
    crop: tuple      # scene rectangle actually resampled

    @property
    def height(self):
        return self.maps.height

    @property
    def width(self):
        return self.maps.width


def identity_region(scene_maps):
    """Treat the whole scene as one region at scale 1."""
    h, w = scene_maps.height, scene_maps.width
    box = DetectionBox((0.0, 0.0, float(w), float(h)), 1.0)
    crop = (0.0, 0.0, float(w), float(h))
    return ZoomedRegion(source_box=box, scale=1.0,
                        maps=RegionMaps(scene_maps, crop, h, w, 1.0),
                        transform=Affine(1.0, 0.0, 0.0), crop=crop)


def filter_boxes(boxes, score_threshold=DETECTION_SCORE_THRESHOLD,
                 iou_threshold=DETECTION_IOU_THRESHOLD):
    cands = [b for b in boxes if b.score >= score_threshold]
    order = sorted(range(len(cands)), key=lambda i: (-cands[i].score, i))
    kept = []
    for i in order:
        b = cands[i]
        if all(box_iou(b.rect, k.rect) <= iou_threshold for k in kept):
            kept.append(b)
    return kept


def auto_zoom(box, scene_maps, pad=0.2, target_height=256.0, scale_range=(0.4, 4.0)):
    """Crop the padded box and rescale it so its height is about `target_height`.

    `pad` is the total fraction of the box size added, split evenly between
    opposite sides (0.2 turns a 64 px tall box into a 76.8 px crop).
    """
    x, y, w, h = box.rect
    pad = pad / 2
    if not (w > 0 and h > 0):
        raise ValueError(f"degenerate box {box.rect}")
    H, W = scene_maps.height, scene_maps.width
    x0 = max(x - pad * w, 0.0)
    y0 = max(y - pad * h, 0.0)
    x1 = min(x + w + pad * w, float(W))
    y1 = min(y + h + pad * h, float(H))
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"box {box.rect} does not intersect the {H}x{W} scene")
    scale = min(max(target_height / (y1 - y0), scale_range[0]), scale_range[1])
    out_h = max(int(round((y1 - y0) * scale)), 1)
    out_w = max(int(round((x1 - x0) * scale)), 1)
    # crop extent chosen so the sampling grid has exactly `scale` px per scene px
    crop = (x0, y0, out_w / scale, out_h / scale)
    maps = RegionMaps(scene_maps, crop, out_h, out_w, scale)
    return ZoomedRegion(source_box=box, scale=scale, maps=maps,
                        transform=Affine(scale, x0, y0), crop=crop)


@dataclass(frozen=True)
class JointProposal:
    x: float
    y: float
    joint_type: int
    score: float

    @property
    def loc(self):
        return (self.x, self.y)


def local_maxima(chan):
    """Boolean mask of plateau-safe local maxima over the 8-neighbourhood.

    A pixel qualifies when it beats every neighbour, or ties it while coming
    first in (y, x) order.
    """
    h, w = chan.shape
    pad = np.pad(chan, 1, mode="constant", constant_values=-np.inf)
    keep = np.ones((h, w), dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            nb = pad[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
            later = (dy, dx) > (0, 0)
            keep &= (chan > nb) | ((chan == nb) & later)
    return keep


def _refine(chan, x, y):
    # log-parabola through the peak and its two neighbours on each axis
    h, w = chan.shape
    out = [float(x), float(y)]
    for axis, (n, pos) in enumerate(((w, x), (h, y))):
        if pos <= 0 or pos >= n - 1:
            continue
        if axis == 0:
            a, b, c = chan[y, x - 1], chan[y, x], chan[y, x + 1]
        else:
            a, b, c = chan[y - 1, x], chan[y, x], chan[y + 1, x]
        if min(a, b, c) <= 0:
            continue
        la, lb, lc = math.log(a), math.log(b), math.log(c)
        denom = la - 2 * lb + lc
        if denom >= 0:
            continue
        out[axis] = pos + min(max(0.5 * (la - lc) / denom, -0.5), 0.5)
    return out[0], out[1]


def propose_joints(region, score_threshold=JOINT_SCORE_THRESHOLD,
                   distance=PROPOSAL_DISTANCE, per_type=PROPOSALS_PER_TYPE, subpixel=True):
    """NMS candidates for every joint type, strongest first within a type.

    With `subpixel`, peak locations are refined within half a pixel before
    suppression, so the distance guarantee holds for the reported locations.
    """
    data = region.maps.joints.data
    out = []
    d2 = distance * distance
    for k in range(sk.NUM_JOINTS):
        chan = data[:, :, k]
        peaks = local_maxima(chan) & (chan >= score_threshold)
        ys, xs = np.nonzero(peaks)
        order = sorted(range(len(xs)), key=lambda i: (-float(chan[ys[i], xs[i]]), ys[i], xs[i]))
        kept = []
        for i in order:
            x, y = int(xs[i]), int(ys[i])
            fx, fy = _refine(chan, x, y) if subpixel else (float(x), float(y))
            if any((fx - p.x) ** 2 + (fy - p.y) ** 2 <= d2 for p in kept):
                continue
            kept.append(JointProposal(fx, fy, k, float(chan[y, x])))
            if len(kept) == per_type:
                break
        out.extend(kept)
    return out
