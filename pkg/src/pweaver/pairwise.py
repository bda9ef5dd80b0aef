"""Pair features between joint proposals and the logistic same-person model.

A pair feature has 12 entries: 4 geometric entries comparing the observed
displacement between two proposals with the displacement predicted by the
offset map, followed by 8 entries describing how both proposals sit relative
to the part label map.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import skeleton as sk
from .geometry import bresenham, oriented_rect_window

FEATURE_DIM = 12
NEIGHBOR_DIM = 4
BOUNDARY_RADIUS = 3.0
RECT_ASPECT = 2.5


class ModelError(KeyError):
    pass


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class JointPartAssociation:
    joint_parts: dict = field(default_factory=lambda: dict(sk.JOINT_PARTS))
    edge_parts: dict = field(default_factory=lambda: dict(sk.EDGE_PART))

    def __post_init__(self):
        for k in range(sk.NUM_JOINTS):
            parts = self.joint_parts.get(k, ())
            if not 1 <= len(parts) <= 2:
                raise ValueError(f"joint {k} needs one or two associated parts")
        if len(self.edge_parts) != sk.NUM_JOINTS - 1:
            raise ValueError("every skeleton edge needs exactly one associated part")

    def edge_part(self, a, b):
        key = sk.edge_key(a, b)
        return None if key is None else self.edge_parts[key]


DEFAULT_ASSOCIATION = JointPartAssociation()


def _angle(u, v):
    nu = math.hypot(*u)
    nv = math.hypot(*v)
    if nu == 0 or nv == 0:
        return 0.0
    c = (u[0] * v[0] + u[1] * v[1]) / (nu * nv)
    return math.acos(min(max(c, -1.0), 1.0))


def offset_geometry(v_ij, vp_ij, v_ji, vp_ji):
    """[|v_ji - v'_ji|, |v_ij - v'_ij|, angle(v_ji, v'_ji), angle(v_ij, v'_ij)]."""
    return [math.hypot(v_ji[0] - vp_ji[0], v_ji[1] - vp_ji[1]),
            math.hypot(v_ij[0] - vp_ij[0], v_ij[1] - vp_ij[1]),
            _angle(v_ji, vp_ji),
            _angle(v_ij, vp_ij)]


def _check_in_bounds(region, c):
    if not (0 <= c.x <= region.width - 1 and 0 <= c.y <= region.height - 1):
        raise ValueError(f"proposal at ({c.x}, {c.y}) lies outside the "
                         f"{region.height}x{region.width} region")


def neighbor_features(region, c_i, c_j):
    _check_in_bounds(region, c_i)
    _check_in_bounds(region, c_j)
    if c_i.joint_type == c_j.joint_type:
        raise ValueError("neighbor features need two different joint types")
    v_ij = (c_j.x - c_i.x, c_j.y - c_i.y)
    v_ji = (-v_ij[0], -v_ij[1])
    vp_ij = region.maps.offset_at(c_i.x, c_i.y, c_i.joint_type, c_j.joint_type)
    vp_ji = region.maps.offset_at(c_j.x, c_j.y, c_j.joint_type, c_i.joint_type)
    return offset_geometry(v_ij, vp_ij, v_ji, vp_ji)


class LabelIndex:
    """A part label map plus per-label pixel counts, shared across many pairs."""

    def __init__(self, labels):
        self.labels = np.asarray(labels)
        self.counts = np.bincount(self.labels.ravel(), minlength=sk.NUM_PARTS)

    @property
    def shape(self):
        return self.labels.shape


def _as_index(label_map):
    return label_map if isinstance(label_map, LabelIndex) else LabelIndex(label_map)


def _pixel(labels, c):
    h, w = labels.shape
    x = min(max(int(round(c[0])), 0), w - 1)
    y = min(max(int(round(c[1])), 0), h - 1)
    return x, y


def region_indicators(labels, c, part):
    """[inside, near boundary] of point c with respect to the pixels labelled `part`."""
    x, y = _pixel(labels, c)
    inside = float(labels[y, x] == part)
    r = int(BOUNDARY_RADIUS)
    h, w = labels.shape
    y0, y1 = max(y - r, 0), min(y + r + 1, h)
    x0, x1 = max(x - r, 0), min(x + r + 1, w)
    win = labels[y0:y1, x0:x1]
    yy, xx = np.mgrid[y0:y1, x0:x1]
    disc = (xx - x) ** 2 + (yy - y) ** 2 <= BOUNDARY_RADIUS ** 2
    in_part = win == part
    near = float(bool((disc & in_part).any() and (disc & ~in_part).any()))
    return [inside, near]


def line_proportion(labels, a, b, part):
    """Fraction of the rasterised segment a-b whose pixels carry `part`."""
    h, w = labels.shape
    pts = bresenham(*_pixel(labels, a), *_pixel(labels, b))
    hits = sum(1 for x, y in pts if 0 <= x < w and 0 <= y < h and labels[y, x] == part)
    return hits / len(pts)


def rect_iou(index, a, b, part):
    """Pixel IOU between the oriented a-b rectangle (aspect 2.5:1) and the part region."""
    index = _as_index(index)
    length = math.hypot(b[0] - a[0], b[1] - a[1])
    x0, y0, hit = oriented_rect_window(index.shape, a, b, length / RECT_ASPECT)
    area = int(hit.sum())
    total = int(index.counts[part])
    if area == 0 and total == 0:
        return 0.0
    win = index.labels[y0:y0 + hit.shape[0], x0:x0 + hit.shape[1]]
    inter = int((hit & (win == part)).sum())
    return inter / (area + total - inter)


def segment_features(label_map, assoc, c_i, c_j):
    """8 consistency entries for the ordered pair (c_i, c_j)."""
    index = _as_index(label_map)
    labels = index.labels
    ti, tj = c_i.joint_type, c_j.joint_type
    edge_part = assoc.edge_part(ti, tj)
    first = edge_part if edge_part is not None else assoc.joint_parts[ti][0]
    feats = region_indicators(labels, c_i.loc, first)
    parts_j = assoc.joint_parts[tj]
    for slot in range(2):
        if slot < len(parts_j):
            feats += region_indicators(labels, c_j.loc, parts_j[slot])
        else:
            feats += [0.0, 0.0]
    if edge_part is None:
        feats += [0.0, 0.0]
    else:
        feats.append(line_proportion(labels, c_i.loc, c_j.loc, edge_part))
        feats.append(rect_iou(index, c_i.loc, c_j.loc, edge_part))
    return feats


def pair_feature(region, label_map, assoc, c_i, c_j, use_segments=True):
    """Full 12-d feature with the pair put in canonical (lower type first) order."""
    if c_j.joint_type < c_i.joint_type:
        c_i, c_j = c_j, c_i
    if c_i.joint_type == c_j.joint_type:
        f = np.zeros(FEATURE_DIM)
        f[0] = math.hypot(c_j.x - c_i.x, c_j.y - c_i.y)
        return f
    fn = neighbor_features(region, c_i, c_j)
    fs = segment_features(label_map, assoc, c_i, c_j) if use_segments else [0.0] * 8
    return np.array(fn + fs, dtype=np.float64)


def pair_key(ti, tj):
    return (ti, tj) if ti <= tj else (tj, ti)


ALL_PAIRS = tuple((i, j) for i in range(sk.NUM_JOINTS) for j in range(i, sk.NUM_JOINTS))


def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@dataclass
class LogisticModel:
    pairs: dict                      # (i, j) with i <= j -> (w, b)
    pooled: dict                     # "distinct" / "same" -> (w, b)
    meta: dict = field(default_factory=dict)

    def weights(self, ti, tj):
        key = pair_key(ti, tj)
        try:
            return self.pairs[key]
        except KeyError:
            raise ModelError(f"no weights for joint-type pair {key[0]}-{key[1]}") from None

    def to_json(self):
        def enc(wb):
            w, b = wb
            return {"w": [float(v) for v in w], "b": float(b)}
        return {
            "pairs": {f"{i}-{j}": enc(wb) for (i, j), wb in sorted(self.pairs.items())},
            "pooled": {name: enc(wb) for name, wb in sorted(self.pooled.items())},
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, doc):
        def dec(d):
            w = np.asarray(d["w"], dtype=np.float64)
            if w.shape != (FEATURE_DIM,) or not np.isfinite(w).all() or not math.isfinite(d["b"]):
                raise ModelError("weights must be 12 finite numbers plus a finite bias")
            return (w, float(d["b"]))
        pairs = {}
        for key, d in doc["pairs"].items():
            i, j = (int(v) for v in key.split("-"))
            pairs[pair_key(i, j)] = dec(d)
        pooled = {name: dec(d) for name, d in doc.get("pooled", {}).items()}
        return cls(pairs=pairs, pooled=pooled, meta=dict(doc.get("meta", {})))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def pair_probability(model, f, type_i, type_j):
    w, b = model.weights(type_i, type_j)
    return _sigmoid(float(np.dot(w, f)) + b)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 300
    l2: float = 1e-4
    seed: int = 0


def _fit(X, y, cfg, history=None):
    """L2-regularised logistic regression by plain gradient descent.

    Features are standardised internally for conditioning; the returned
    weights act on raw features. The step is 1/L for the loss's Lipschitz
    constant L, which keeps the loss non-increasing.
    """
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd < 1e-12] = 1.0
    Z = np.hstack([(X - mu) / sd, np.ones((len(X), 1))])
    n, d = Z.shape
    lam = cfg.l2
    reg = np.ones(d)
    reg[-1] = 0.0
    lip = 0.25 * np.linalg.eigvalsh(Z.T @ Z / n).max() + lam
    step = 1.0 / lip
    theta = np.zeros(d)
    for _ in range(cfg.iterations):
        z = Z @ theta
        p = 1.0 / (1.0 + np.exp(-z))
        grad = Z.T @ (p - y) / n + lam * reg * theta
        if history is not None:
            history.append(_loss(z, y) + 0.5 * lam * float(np.sum(reg * theta * theta)))
        theta = theta - step * grad
    w = theta[:-1] / sd
    b = theta[-1] - float(np.dot(theta[:-1], mu / sd))
    return w, b


def _loss(z, y):
    # mean binary cross-entropy on logits, overflow-safe
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def _constant(y):
    pos = float(np.sum(y))
    neg = float(len(y) - pos)
    return np.zeros(FEATURE_DIM), math.log((pos + 0.5) / (neg + 0.5))


def _fit_or_constant(X, y, cfg):
    if len(y) >= 2 and 0 < y.sum() < len(y):
        return _fit(X, y, cfg)
    return _constant(y)


def train_logistic(samples, config=TrainConfig()):
    """Fit one model per joint-type pair.

    `samples` is a sequence of (feature, (type_i, type_j), same_person).
    Pairs without both classes fall back to a pooled model over all distinct
    type pairs (or all same-type pairs).
    """
    if not samples:
        raise TrainingError("no training samples")
    groups = {}
    for f, (ti, tj), label in samples:
        groups.setdefault(pair_key(ti, tj), []).append((np.asarray(f, dtype=np.float64), float(label)))

    def stack(items):
        return np.array([f for f, _ in items]), np.array([l for _, l in items])

    distinct = [s for key, items in sorted(groups.items()) if key[0] != key[1] for s in items]
    same = [s for key, items in sorted(groups.items()) if key[0] == key[1] for s in items]
    pooled = {}
    for name, items in (("distinct", distinct), ("same", same)):
        if items:
            pooled[name] = _fit_or_constant(*stack(items), config)
        else:
            pooled[name] = _constant(np.zeros(0))

    pairs = {}
    fallback = []
    for key in ALL_PAIRS:
        items = groups.get(key, [])
        X, y = stack(items) if items else (None, np.zeros(0))
        if len(y) >= 2 and 0 < y.sum() < len(y):
            pairs[key] = _fit(X, y, config)
        else:
            pairs[key] = pooled["same" if key[0] == key[1] else "distinct"]
            fallback.append(f"{key[0]}-{key[1]}")
    meta = {"iterations": config.iterations, "l2": config.l2, "seed": config.seed,
            "samples": len(samples), "fallback_pairs": fallback}
    return LogisticModel(pairs=pairs, pooled=pooled, meta=meta)


def training_loss_history(X, y, config=TrainConfig()):
    history = []
    _fit(np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64), config, history)
    return history
