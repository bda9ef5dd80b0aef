"""Pose and part-segmentation metrics: joint AP/mAP, ADK, mean IOU and size-binned IOU.

Matching conventions (fixed so numbers stay comparable between runs): a
prediction matches the unmatched ground-truth person with the highest
whole-body box IOU when that IOU is at least 0.5; a matched joint counts as
correct within half of the person's reference scale; AP integrates the
all-points precision envelope.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import skeleton as sk
from .geometry import box_iou, points_bbox

MATCH_IOU = 0.5
JOINT_TOLERANCE = 0.5
SIZE_BINS = (("XS", 0, 40 ** 2), ("S", 40 ** 2, 80 ** 2),
             ("M", 80 ** 2, 160 ** 2), ("L", 160 ** 2, math.inf))


def _gt_joint(person, k):
    if not person.visible[k]:
        return None
    return (float(person.joints[k, 0]), float(person.joints[k, 1]))


def gt_whole_box(person):
    pts = [_gt_joint(person, k) for k in range(sk.NUM_JOINTS)]
    pts = [p for p in pts if p is not None]
    return points_bbox(pts) if pts else None


def pred_whole_box(pose):
    pts = [j for j in pose.joints if j is not None]
    return points_bbox(pts)


def reference_scale(person):
    """Half the forehead-neck distance, or None when either joint is missing."""
    f, n = _gt_joint(person, sk.FOREHEAD), _gt_joint(person, sk.NECK)
    if f is None or n is None:
        return None
    return 0.5 * math.dist(f, n)


def average_precision(scores, tps, n_pos):
    if n_pos == 0:
        return float("nan")
    if not scores:
        return 0.0
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    tp = np.asarray(tps, dtype=float)[order]
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1.0 - tp)
    recall = ctp / n_pos
    precision = ctp / (ctp + cfp)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    idx = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def match_poses(preds, gts):
    """Greedy one-to-one matching by descending pose score; returns gt index or -1 per prediction."""
    gt_boxes = [gt_whole_box(g) for g in gts]
    taken = [False] * len(gts)
    match = [-1] * len(preds)
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    for i in order:
        pbox = pred_whole_box(preds[i])
        best, best_iou = -1, MATCH_IOU
        for g, gbox in enumerate(gt_boxes):
            if taken[g] or gbox is None:
                continue
            iou = box_iou(pbox, gbox)
            if iou >= best_iou and (best < 0 or iou > best_iou):
                best, best_iou = g, iou
        if best >= 0:
            taken[best] = True
            match[i] = best
    return match


def joint_ap(images):
    """Per-joint AP and mAP over a list of (predictions, ground-truth people) images."""
    scores = [[] for _ in range(sk.NUM_JOINTS)]
    tps = [[] for _ in range(sk.NUM_JOINTS)]
    n_pos = [0] * sk.NUM_JOINTS
    for preds, gts in images:
        for g in gts:
            for k in range(sk.NUM_JOINTS):
                n_pos[k] += g.visible[k]
        match = match_poses(preds, gts)
        for pose, m in zip(preds, match):
            scale = reference_scale(gts[m]) if m >= 0 else None
            for k, loc in pose.present():
                ok = False
                if scale is not None:
                    g = _gt_joint(gts[m], k)
                    ok = g is not None and math.dist(loc, g) <= JOINT_TOLERANCE * scale
                scores[k].append(pose.score)
                tps[k].append(ok)
    ap = [average_precision(scores[k], tps[k], n_pos[k]) for k in range(sk.NUM_JOINTS)]
    valid = [a for a in ap if not math.isnan(a)]
    return ap, (float(np.mean(valid)) if valid else float("nan"))


def compute_map(preds, gt):
    return joint_ap([(preds, gt)])


def adk(images):
    """Per-joint mean relative distance (percent of reference scale) and its mean.

    Returns (per_joint, mean, skipped_people).
    """
    sums = np.zeros(sk.NUM_JOINTS)
    counts = np.zeros(sk.NUM_JOINTS)
    skipped = 0
    for preds, gts in images:
        pboxes = [pred_whole_box(p) for p in preds]
        for g in gts:
            scale = reference_scale(g)
            if scale is None or scale == 0:
                skipped += 1
                continue
            gbox = gt_whole_box(g)
            best, best_iou = None, 0.0
            for p, pbox in zip(preds, pboxes):
                iou = box_iou(pbox, gbox)
                if iou > best_iou:
                    best, best_iou = p, iou
            if best is None:
                continue
            for k, loc in best.present():
                gj = _gt_joint(g, k)
                if gj is not None:
                    sums[k] += math.dist(loc, gj) / scale
                    counts[k] += 1
    per_joint = [float(100 * s / c) if c else float("nan") for s, c in zip(sums, counts)]
    valid = [v for v in per_joint if not math.isnan(v)]
    return per_joint, (float(np.mean(valid)) if valid else float("nan")), skipped


def compute_adk(preds, gt):
    return adk([(preds, gt)])


class IouAccumulator:
    """Per-class intersection / union pixel counts, summed over images."""

    def __init__(self, n_classes=sk.NUM_PARTS):
        self.inter = np.zeros(n_classes, dtype=np.int64)
        self.union = np.zeros(n_classes, dtype=np.int64)

    def add(self, pred, gt, mask=None):
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise ValueError(f"label maps differ in shape: {pred.shape} vs {gt.shape}")
        if mask is not None:
            pred, gt = pred[mask], gt[mask]
        n = len(self.inter)
        for c in range(n):
            p = pred == c
            g = gt == c
            self.inter[c] += int(np.count_nonzero(p & g))
            self.union[c] += int(np.count_nonzero(p | g))
        return self

    def per_class(self):
        return [float(i / u) if u else float("nan") for i, u in zip(self.inter, self.union)]

    def miou(self):
        vals = [v for v in self.per_class() if not math.isnan(v)]
        return float(np.mean(vals)) if vals else float("nan")


def compute_miou(pred, gt):
    acc = IouAccumulator().add(pred, gt)
    return acc.per_class(), acc.miou()


def size_bin(area):
    for name, lo, hi in SIZE_BINS:
        if lo <= area < hi:
            return name
    raise ValueError(f"bad area {area}")


class SizeBinnedIou:
    """mIOU restricted to the instances of each size bin plus the background inside their boxes."""

    def __init__(self):
        self.bins = {name: IouAccumulator() for name, _, _ in SIZE_BINS}
        self.populated = {name: 0 for name, _, _ in SIZE_BINS}

    def add(self, pred, gt_labels, owner):
        owner = np.asarray(owner)
        masks = {}
        for i in np.unique(owner):
            if i < 0:
                continue
            inst = owner == i
            ys, xs = np.nonzero(inst)
            name = size_bin(len(xs))
            region = np.zeros_like(inst)
            box = region[ys.min():ys.max() + 1, xs.min():xs.max() + 1]
            box[:] = True
            keep = region & (inst | (owner < 0))
            masks[name] = keep if name not in masks else masks[name] | keep
            self.populated[name] += 1
        for name, m in masks.items():
            self.bins[name].add(pred, gt_labels, m)
        return self

    def result(self):
        return {name: (self.bins[name].miou() if self.populated[name] else None)
                for name, _, _ in SIZE_BINS}


def compute_size_binned_miou(pred, scenes):
    """`scenes` is a list of (pred labels, gt labels, owner map); `pred` unused when None."""
    acc = SizeBinnedIou()
    for p, g, owner in scenes:
        acc.add(p if pred is None else pred, g, owner)
    return acc.result()


@dataclass
class EvalReport:
    per_joint_ap: list
    map: float
    per_joint_adk: list
    mean_adk: float
    adk_skipped: int
    per_part_iou: list
    miou: float
    size_miou: dict
    protocol: dict = field(default_factory=lambda: {
        "match_iou": MATCH_IOU, "joint_tolerance_ref_scale": JOINT_TOLERANCE,
        "ap": "all-points interpolation", "size_bins_px": [b[1] for b in SIZE_BINS[1:]]})

    def to_json(self):
        def clean(v):
            if isinstance(v, float) and math.isnan(v):
                return None
            return v
        return {
            "protocol": self.protocol,
            "ap": {n: clean(v) for n, v in zip(sk.JOINT_NAMES, self.per_joint_ap)},
            "ap_groups": {n: clean(v) for n, v in self.ap_groups().items()},
            "map": clean(self.map),
            "adk": {n: clean(v) for n, v in zip(sk.JOINT_NAMES, self.per_joint_adk)},
            "adk_groups": {n: clean(v) for n, v in self.adk_groups().items()},
            "mean_adk": clean(self.mean_adk),
            "adk_skipped_people": self.adk_skipped,
            "iou": {n: clean(v) for n, v in zip(sk.PART_NAMES, self.per_part_iou)},
            "miou": clean(self.miou),
            "size_miou": self.size_miou,
        }

    @staticmethod
    def _grouped(values, groups):
        out = {}
        for name, idx in groups:
            vals = [values[k] for k in idx if not math.isnan(values[k])]
            out[name] = float(np.mean(vals)) if vals else float("nan")
        return out

    def ap_groups(self):
        return self._grouped(self.per_joint_ap, sk.AP_GROUPS)

    def adk_groups(self):
        return self._grouped(self.per_joint_adk, sk.ADK_GROUPS)

    def to_table(self):
        def row(label, cells, width=9):
            return f"{label:<10}" + "".join(f"{c:>{width}}" for c in cells)

        def pct(v):
            return "-" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{100 * v:.1f}"

        def num(v):
            return "-" if v is None or math.isnan(v) else f"{v:.1f}"

        lines = [f"# matching: whole-body IOU >= {MATCH_IOU}, joint within "
                 f"{JOINT_TOLERANCE} x reference scale, all-points AP"]
        ap = self.ap_groups()
        lines += ["Pose AP (%)", row("", list(ap) + ["mAP"]),
                  row("ours", [pct(v) for v in ap.values()] + [pct(self.map)]), ""]
        adk_g = self.adk_groups()
        lines += ["ADK (%)", row("", list(adk_g) + ["Ave."]),
                  row("ours", [num(v) for v in adk_g.values()] + [num(self.mean_adk)]), ""]
        names = ["Head", "Torso", "U-arms", "L-arms", "U-legs", "L-legs", "Bkg"]
        ious = self.per_part_iou[1:] + self.per_part_iou[:1]
        lines += ["Part IOU (%)", row("", names + ["Ave."]),
                  row("ours", [pct(v) for v in ious] + [pct(self.miou)]), ""]
        lines += ["mIOU by instance size (%)", row("", [f"Size {n}" for n in self.size_miou]),
                  row("ours", [pct(v) for v in self.size_miou.values()])]
        return "\n".join(lines) + "\n"
