"""Synthetic multi-person scenes and the score maps a pose/part network would emit.

Ground truth comes from a randomly articulated 14-joint skeleton. Score maps
are rendered from it and corrupted according to a `NoiseSpec`, so the rest of
the pipeline can be exercised without any trained network.
"""

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import skeleton as sk
from .geometry import oriented_rect_window, paint_disc
from .tensor_io import ScoreMapSet, Tensor3, load_tensor, save_tensor


class GenerationError(RuntimeError):
    pass


# How each joint is grown from an already placed one:
# (joint, anchor, edge, reference, base angle, outward sign)
# reference "lean": angle is relative to the body lean; "anchor_edge": relative to
# the direction of the edge ending at `anchor`. Angles are in image coordinates
# (y down), so pi/2 points down.
_GROWTH = (
    (sk.FOREHEAD, sk.NECK, 0, "lean", -math.pi / 2, 1),
    (sk.L_SHOULDER, sk.NECK, 1, "lean", 0.0, -1),
    (sk.R_SHOULDER, sk.NECK, 2, "lean", math.pi, 1),
    (sk.L_ELBOW, sk.L_SHOULDER, 3, "lean", math.pi / 2, -1),
    (sk.R_ELBOW, sk.R_SHOULDER, 4, "lean", math.pi / 2, 1),
    (sk.L_WRIST, sk.L_ELBOW, 5, "anchor_edge", 0.0, -1),
    (sk.R_WRIST, sk.R_ELBOW, 6, "anchor_edge", 0.0, 1),
    (sk.L_WAIST, sk.NECK, 7, "lean", math.pi / 2 - 0.22, -1),
    (sk.R_WAIST, sk.NECK, 8, "lean", math.pi / 2 + 0.22, 1),
    (sk.L_KNEE, sk.L_WAIST, 9, "lean", math.pi / 2, -1),
    (sk.R_KNEE, sk.R_WAIST, 10, "lean", math.pi / 2, 1),
    (sk.L_ANKLE, sk.L_KNEE, 11, "anchor_edge", 0.0, -1),
    (sk.R_ANKLE, sk.R_KNEE, 12, "anchor_edge", 0.0, 1),
)


@dataclass(frozen=True)
class SkeletonModel:
    """Articulated body model; lengths are pixels at person scale 1."""

    edges: tuple = sk.EDGES
    limb_length_mean: tuple = (26.0, 20.0, 20.0, 30.0, 30.0, 26.0, 26.0,
                               56.0, 56.0, 42.0, 42.0, 40.0, 40.0)
    limb_length_sd: tuple = (2.0, 1.5, 1.5, 2.5, 2.5, 2.0, 2.0,
                             4.0, 4.0, 3.0, 3.0, 3.0, 3.0)
    # outward deviation from the base angle, radians
    joint_angle_ranges: tuple = ((-0.25, 0.25), (-0.15, 0.15), (-0.15, 0.15),
                                 (-0.3, 1.6), (-0.3, 1.6), (-1.2, 1.2), (-1.2, 1.2),
                                 (-0.05, 0.05), (-0.05, 0.05),
                                 (-0.15, 0.5), (-0.15, 0.5), (-0.5, 0.5), (-0.5, 0.5))
    lean_range: tuple = (-0.15, 0.15)
    scale_range: tuple = (0.45, 0.8)
    limb_width_ratio: float = 0.35
    head_radius_ratio: float = 0.6

    def __post_init__(self):
        if len(self.edges) != sk.NUM_JOINTS - 1:
            raise ValueError("skeleton needs 13 edges")
        parent = list(range(sk.NUM_JOINTS))

        def find(a):
            while parent[a] != a:
                a = parent[a]
            return a

        for a, b in self.edges:
            ra, rb = find(a), find(b)
            if ra == rb:
                raise ValueError("skeleton edges contain a cycle")
            parent[ra] = rb
        if any(m <= 0 for m in self.limb_length_mean):
            raise ValueError("limb lengths must be positive")


@dataclass(frozen=True)
class NoiseSpec:
    joint_blob_sigma: float = 2.5
    joint_score_peak: float = 0.95
    background_noise_sd: float = 0.0
    offset_noise_sd: float = 0.0
    part_flip_rate: float = 0.0
    false_peak_rate: float = 0.0

    def __post_init__(self):
        for name, v in asdict(self).items():
            if v < 0 or not math.isfinite(v):
                raise ValueError(f"{name} must be a finite non-negative number")
        if self.joint_score_peak > 1 or self.part_flip_rate > 1:
            raise ValueError("peak and flip rate must be <= 1")

    @classmethod
    def zero(cls):
        """Clean maps: blobs keep their shape, every corruption term is off."""
        return cls()

    @classmethod
    def moderate(cls):
        return cls(background_noise_sd=0.04, offset_noise_sd=6.0,
                   part_flip_rate=0.15, false_peak_rate=1.0)


@dataclass
class GroundTruthPerson:
    joints: np.ndarray          # (14, 2) x, y
    visible: np.ndarray         # (14,) bool
    part_mask: np.ndarray       # (H, W) uint8, unoccluded
    bbox: tuple                 # x, y, w, h (continuous pixel coords)
    depth_rank: int

    def joint(self, k):
        if not self.visible[k]:
            return None
        return (float(self.joints[k, 0]), float(self.joints[k, 1]))


@dataclass
class Scene:
    height: int
    width: int
    people: list
    seed: int = 0
    _composite: tuple = field(default=None, repr=False, compare=False)

    def composite(self):
        """(part labels, owner index or -1) after painter's-order occlusion."""
        if self._composite is None:
            labels = np.zeros((self.height, self.width), dtype=np.uint8)
            owner = np.full((self.height, self.width), -1, dtype=np.int64)
            order = sorted(range(len(self.people)), key=lambda i: self.people[i].depth_rank)
            for i in order:
                m = self.people[i].part_mask
                hit = m > 0
                labels[hit] = m[hit]
                owner[hit] = i
            self._composite = (labels, owner)
        return self._composite

    def part_labels(self):
        return self.composite()[0]

    def instance_mask(self, i):
        return self.composite()[1] == i


def _mask_bbox(mask):
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return (0.0, 0.0, 0.0, 0.0)
    return (float(xs.min()), float(ys.min()),
            float(xs.max() - xs.min() + 1), float(ys.max() - ys.min() + 1))


def _sample_joints(model, rng):
    scale = rng.uniform(*model.scale_range)
    lean = rng.uniform(*model.lean_range)
    pos = np.zeros((sk.NUM_JOINTS, 2))
    edge_dir = {}
    for joint, anchor, e, ref, base, sign in _GROWTH:
        lo, hi = model.joint_angle_ranges[e]
        dev = rng.uniform(lo, hi)
        if ref == "lean":
            angle = lean + base + sign * dev
        else:
            angle = edge_dir[anchor] + sign * dev
        length = max(rng.normal(model.limb_length_mean[e], model.limb_length_sd[e]), 1.0)
        length *= scale
        pos[joint] = pos[anchor] + length * np.array([math.cos(angle), math.sin(angle)])
        edge_dir[joint] = angle
    return pos


def render_part_mask(joints, model, height, width):
    """Rasterise the body parts implied by `joints` into an H x W label grid."""
    mask = np.zeros((height, width), dtype=np.uint8)
    shape = (height, width)

    def rect(a, b, w, label):
        x0, y0, hit = oriented_rect_window(shape, a, b, w)
        if hit.size:
            win = mask[y0:y0 + hit.shape[0], x0:x0 + hit.shape[1]]
            win[hit] = label

    j = joints
    hip_mid = (j[sk.L_WAIST] + j[sk.R_WAIST]) / 2
    torso_w = max(np.linalg.norm(j[sk.L_SHOULDER] - j[sk.R_SHOULDER]),
                  np.linalg.norm(j[sk.L_WAIST] - j[sk.R_WAIST]))
    rect(j[sk.NECK], hip_mid, torso_w, sk.TORSO)
    head_len = np.linalg.norm(j[sk.FOREHEAD] - j[sk.NECK])
    centre = (j[sk.FOREHEAD] + j[sk.NECK]) / 2
    head = np.zeros(shape, dtype=bool)
    paint_disc(head, centre, model.head_radius_ratio * head_len)
    mask[head] = sk.HEAD
    for label in (sk.UPPER_LEG, sk.LOWER_LEG, sk.UPPER_ARM, sk.LOWER_ARM):
        for (a, b), part in sk.EDGE_PART.items():
            if part == label:
                length = np.linalg.norm(j[a] - j[b])
                rect(j[a], j[b], model.limb_width_ratio * length, label)
    return mask


def _overlaps(cand_joints, cand_box, placed, min_joint_sep, max_box_overlap):
    cx, cy, cw, ch = cand_box
    for other in placed:
        if np.min(np.linalg.norm(other.joints - cand_joints, axis=1)) < min_joint_sep:
            return True
        ox, oy, ow, oh = other.bbox
        iw = min(cx + cw, ox + ow) - max(cx, ox)
        ih = min(cy + ch, oy + oh) - max(cy, oy)
        if iw > 0 and ih > 0:
            if iw * ih / min(cw * ch, ow * oh) > max_box_overlap:
                return True
    return False


def sample_scene(model, n_people, canvas, seed, min_joint_sep=24.0,
                 max_box_overlap=0.25, attempts=100):
    """Place `n_people` random people on a canvas of (height, width)."""
    if n_people < 1:
        raise ValueError("n_people must be >= 1")
    height, width = canvas
    rng = np.random.default_rng([seed, 0x5CE7E])
    people = []
    for _ in range(n_people):
        for _attempt in range(attempts):
            rel = _sample_joints(model, rng)
            margin = 0.6 * np.linalg.norm(rel[sk.FOREHEAD] - rel[sk.NECK]) + 4
            lo = rel.min(axis=0) - margin
            hi = rel.max(axis=0) + margin
            span = hi - lo
            if span[0] >= width or span[1] >= height:
                continue
            ox = rng.uniform(-lo[0], width - hi[0])
            oy = rng.uniform(-lo[1], height - hi[1])
            joints = np.round(rel + [ox, oy])
            box = (float(ox + lo[0]), float(oy + lo[1]), float(span[0]), float(span[1]))
            if _overlaps(joints, box, people, min_joint_sep, max_box_overlap):
                continue
            mask = render_part_mask(joints, model, height, width)
            inside = ((joints[:, 0] >= 0) & (joints[:, 0] <= width - 1)
                      & (joints[:, 1] >= 0) & (joints[:, 1] <= height - 1))
            people.append(GroundTruthPerson(joints=joints, visible=inside,
                                            part_mask=mask, bbox=_mask_bbox(mask),
                                            depth_rank=0))
            break
        else:
            raise GenerationError(
                f"could not place person {len(people) + 1} of {n_people} on a "
                f"{height}x{width} canvas after {attempts} attempts")
    for rank, i in enumerate(rng.permutation(n_people)):
        people[int(i)].depth_rank = rank
    return Scene(height=height, width=width, people=people, seed=seed)


def _blob(chan, x, y, sigma, peak):
    r = 4 * sigma
    h, w = chan.shape
    x0, x1 = max(int(x - r), 0), min(int(x + r) + 2, w)
    y0, y1 = max(int(y - r), 0), min(int(y + r) + 2, h)
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    chan[y0:y1, x0:x1] += peak * np.exp(-((xx - x) ** 2 + (yy - y) ** 2) / (2 * sigma * sigma))


def render_score_maps(scene, noise, seed):
    rng = np.random.default_rng([seed, 0x5C0E])
    h, w = scene.height, scene.width
    sigma = max(noise.joint_blob_sigma, 1e-3)

    joints = np.zeros((h, w, sk.NUM_JOINTS), dtype=np.float64)
    for person in scene.people:
        for k in range(sk.NUM_JOINTS):
            if person.visible[k]:
                x, y = person.joints[k]
                _blob(joints[:, :, k], x, y, sigma, noise.joint_score_peak)
    if noise.false_peak_rate > 0:
        for k in range(sk.NUM_JOINTS):
            for _ in range(rng.poisson(noise.false_peak_rate)):
                x, y = rng.uniform(0, w - 1), rng.uniform(0, h - 1)
                amp = rng.uniform(0.3, 0.9) * noise.joint_score_peak
                _blob(joints[:, :, k], round(x), round(y), sigma, amp)
    if noise.background_noise_sd > 0:
        joints += rng.normal(0.0, noise.background_noise_sd, joints.shape)
    np.clip(joints, 0.0, 1.0, out=joints)

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    nbr = np.zeros((h, w, sk.NUM_NEIGHBOR_CHANNELS), dtype=np.float32)
    if scene.people:
        pos = np.stack([p.joints for p in scene.people]).astype(np.float32)  # (P, 14, 2)
        for k in range(sk.NUM_JOINTS):
            d2 = ((xx[None] - pos[:, k, 0, None, None]) ** 2
                  + (yy[None] - pos[:, k, 1, None, None]) ** 2)
            nearest = np.argmin(d2, axis=0)
            others = np.delete(pos[nearest], k, axis=2)  # (H, W, 13, 2)
            others[..., 0] -= xx[:, :, None]
            others[..., 1] -= yy[:, :, None]
            nbr[:, :, k * 26:(k + 1) * 26] = others.reshape(h, w, 26)
    if noise.offset_noise_sd > 0:
        nbr += rng.normal(0.0, noise.offset_noise_sd, nbr.shape).astype(np.float32)

    labels = scene.part_labels().astype(np.int64)
    if noise.part_flip_rate > 0:
        flip = rng.random((h, w)) < noise.part_flip_rate
        shift = rng.integers(1, sk.NUM_PARTS, size=(h, w))
        labels = np.where(flip, (labels + shift) % sk.NUM_PARTS, labels)
    hi = 0.7
    lo = (1.0 - hi) / (sk.NUM_PARTS - 1)
    parts = np.full((h, w, sk.NUM_PARTS), lo, dtype=np.float64)
    np.put_along_axis(parts, labels[:, :, None], hi, axis=2)
    if noise.background_noise_sd > 0:
        parts += rng.normal(0.0, noise.background_noise_sd, parts.shape)
    np.clip(parts, 0.0, 1.0, out=parts)

    return ScoreMapSet(joints=Tensor3(joints), neighbors=Tensor3(nbr), parts=Tensor3(parts))


# ---- persistence -----------------------------------------------------------

def scene_to_json(scene):
    people = []
    for p in scene.people:
        joints = {}
        for k, name in enumerate(sk.JOINT_NAMES):
            joints[name] = [float(p.joints[k, 0]), float(p.joints[k, 1])] if p.visible[k] else None
        people.append({"joints": joints, "depth": int(p.depth_rank)})
    return {"height": scene.height, "width": scene.width, "seed": scene.seed, "people": people}


def save_scene(scene, directory):
    """Write gt.json, parts_gt.pwt (labels) and instances.pwt (owner + 1)."""
    labels, owner = scene.composite()
    with open(directory / "gt.json", "w") as fh:
        json.dump(scene_to_json(scene), fh, indent=1, sort_keys=True)
    save_tensor(Tensor3(labels.astype(np.float32)), directory / "parts_gt.pwt")
    save_tensor(Tensor3((owner + 1).astype(np.float32)), directory / "instances.pwt")


def load_scene(directory):
    with open(directory / "gt.json") as fh:
        doc = json.load(fh)
    labels = load_tensor(directory / "parts_gt.pwt").data[:, :, 0].astype(np.uint8)
    owner = load_tensor(directory / "instances.pwt").data[:, :, 0].astype(np.int64) - 1
    h, w = doc["height"], doc["width"]
    if labels.shape != (h, w) or owner.shape != (h, w):
        raise ValueError(f"{directory}: mask dimensions disagree with gt.json")
    people = []
    for i, pdoc in enumerate(doc["people"]):
        joints = np.zeros((sk.NUM_JOINTS, 2))
        visible = np.zeros(sk.NUM_JOINTS, dtype=bool)
        for k, name in enumerate(sk.JOINT_NAMES):
            loc = pdoc["joints"].get(name)
            if loc is not None:
                joints[k] = loc
                visible[k] = True
        mask = np.where(owner == i, labels, 0).astype(np.uint8)
        people.append(GroundTruthPerson(joints=joints, visible=visible, part_mask=mask,
                                        bbox=_mask_bbox(mask), depth_rank=int(pdoc["depth"])))
    scene = Scene(height=h, width=w, people=people, seed=int(doc.get("seed", 0)))
    scene._composite = (labels, owner)
    return scene
