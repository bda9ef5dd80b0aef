"""From solver labelings to scored poses, pose NMS and pose-guided part refinement."""

import math
from dataclasses import dataclass

import numpy as np

from . import skeleton as sk
from .geometry import box_iou, paint_disc, paint_stick, points_bbox
from .inference import EPS
from .tensor_io import Tensor3, argmax_channel, sample_bilinear

MISSING_JOINT_SCORE = 0.2
NMS_THRESHOLDS = {"head": 0.65, "upper": 0.5, "lower": 0.5, "whole": 0.4}
JOINT_RADIUS = 3.0
STICK_HALF_WIDTH = 3.5

_UPPER = (sk.NECK, sk.L_SHOULDER, sk.R_SHOULDER, sk.L_ELBOW, sk.R_ELBOW,
          sk.L_WRIST, sk.R_WRIST)
_LOWER = (sk.L_WAIST, sk.R_WAIST, sk.L_KNEE, sk.R_KNEE, sk.L_ANKLE, sk.R_ANKLE)


@dataclass
class PoseConfiguration:
    joints: list          # 14 entries of (x, y) or None, scene pixels
    score: float
    source_box: int = -1

    def __post_init__(self):
        if len(self.joints) != sk.NUM_JOINTS:
            raise ValueError("a pose has 14 joint slots")
        if all(j is None for j in self.joints):
            raise ValueError("a pose needs at least one joint")
        if not math.isfinite(self.score):
            raise ValueError("pose score must be finite")

    def present(self):
        return [(k, j) for k, j in enumerate(self.joints) if j is not None]

    def centroid(self):
        pts = np.array([j for _, j in self.present()], dtype=float)
        return pts.mean(axis=0)

    def mapped(self, fn):
        """Copy with every present joint passed through fn(x, y) -> (x, y)."""
        joints = [None if j is None else tuple(float(v) for v in fn(*j)) for j in self.joints]
        return PoseConfiguration(joints, self.score, self.source_box)

    def to_json(self):
        return {"joints": {name: (None if j is None else [float(j[0]), float(j[1])])
                           for name, j in zip(sk.JOINT_NAMES, self.joints)},
                "score": float(self.score), "box": int(self.source_box)}

    @classmethod
    def from_json(cls, doc):
        joints = []
        for name in sk.JOINT_NAMES:
            loc = doc["joints"].get(name)
            joints.append(None if loc is None else (float(loc[0]), float(loc[1])))
        return cls(joints, float(doc["score"]), int(doc.get("box", -1)))


@dataclass(frozen=True)
class PoseBoxes:
    head: tuple = None
    upper: tuple = None
    lower: tuple = None
    whole: tuple = None


def derive_pose_boxes(pose):
    j = pose.joints
    head = None
    if j[sk.FOREHEAD] is not None and j[sk.NECK] is not None:
        r = 0.5 * math.dist(j[sk.FOREHEAD], j[sk.NECK])
        x, y, w, h = points_bbox([j[sk.FOREHEAD], j[sk.NECK]])
        head = (x - r, y - r, w + 2 * r, h + 2 * r)

    def group(idx):
        pts = [j[k] for k in idx if j[k] is not None]
        return points_bbox(pts) if pts else None

    return PoseBoxes(head=head, upper=group(_UPPER), lower=group(_LOWER),
                     whole=group(range(sk.NUM_JOINTS)))


def pose_score(scores, n_missing, missing_score=MISSING_JOINT_SCORE):
    total = sum(math.log(min(max(s, EPS), 1.0 - EPS)) for s in scores)
    return total + n_missing * math.log(missing_score)


def extract_poses(labeling, problem, region, box_index=-1,
                  missing_score=MISSING_JOINT_SCORE):
    """One pose per cluster, mapped to scene pixels."""
    poses = []
    for members in labeling.clusters():
        joints = [None] * sk.NUM_JOINTS
        scores = []
        for i in members:
            c = problem.nodes[i]
            sx, sy = region.transform.px_to_scene(c.x, c.y)
            joints[c.joint_type] = (float(sx), float(sy))
            scores.append(c.score)
        score = pose_score(scores, sk.NUM_JOINTS - len(members), missing_score)
        poses.append(PoseConfiguration(joints, score, box_index))
    return poses


def select_per_box(poses, box):
    """Pose whose joint centroid lies closest to the box centre; ties go to the higher score."""
    if not poses:
        return None
    cx, cy = box.center

    def key(item):
        i, p = item
        mx, my = p.centroid()
        return (math.hypot(mx - cx, my - cy), -p.score, i)

    return min(enumerate(poses), key=key)[1]


def suppresses(boxes_a, boxes_b, thresholds=NMS_THRESHOLDS):
    for name, limit in thresholds.items():
        a, b = getattr(boxes_a, name), getattr(boxes_b, name)
        if a is not None and b is not None and box_iou(a, b) > limit:
            return True
    return False


def pose_nms(poses, thresholds=NMS_THRESHOLDS):
    order = sorted(range(len(poses)), key=lambda i: (-poses[i].score, i))
    kept, kept_boxes = [], []
    for i in order:
        boxes = derive_pose_boxes(poses[i])
        if any(suppresses(boxes, kb, thresholds) for kb in kept_boxes):
            continue
        kept.append(poses[i])
        kept_boxes.append(boxes)
    return kept


def _edges_present(pose):
    for a, b in sk.EDGES:
        if pose.joints[a] is not None and pose.joints[b] is not None:
            yield a, b


def rasterize_pose_features(poses, dims):
    """Channel 0: discs of radius 3 at joints. Channel 1: sticks of width 7 along limbs."""
    h, w = dims
    joint_map = np.zeros((h, w), dtype=bool)
    skel_map = np.zeros((h, w), dtype=bool)
    for pose in poses:
        for _, loc in pose.present():
            paint_disc(joint_map, loc, JOINT_RADIUS)
        for a, b in _edges_present(pose):
            paint_stick(skel_map, pose.joints[a], pose.joints[b], STICK_HALF_WIDTH)
    return Tensor3(np.stack([joint_map, skel_map], axis=2).astype(np.float32))


def part_priors(poses, dims, assoc):
    """Per-part (joint, stick) indicator maps, shape (7, h, w) each."""
    h, w = dims
    joints = np.zeros((sk.NUM_PARTS, h, w), dtype=bool)
    sticks = np.zeros((sk.NUM_PARTS, h, w), dtype=bool)
    for pose in poses:
        for k, loc in pose.present():
            for part in assoc.joint_parts[k]:
                paint_disc(joints[part], loc, JOINT_RADIUS)
        for a, b in _edges_present(pose):
            paint_stick(sticks[assoc.edge_parts[(a, b)]], pose.joints[a], pose.joints[b],
                        STICK_HALF_WIDTH)
    return joints, sticks


def refine_scores(parts, pose_feats, poses, assoc, weights=(0.5, 0.5)):
    """Part scores plus weighted pose priors; the background channel is left alone."""
    data = parts.data.astype(np.float64)
    if not poses or (weights[0] == 0 and weights[1] == 0):
        return data
    feats = pose_feats.data
    joints, sticks = part_priors(poses, (parts.height, parts.width), assoc)
    out = data.copy()
    stick_w, joint_w = weights
    for part in range(1, sk.NUM_PARTS):
        out[:, :, part] += stick_w * (sticks[part] & (feats[:, :, 1] > 0))
        out[:, :, part] += joint_w * (joints[part] & (feats[:, :, 0] > 0))
    return out


def refine_parts(parts, pose_feats, poses, assoc, weights=(0.5, 0.5)):
    return argmax_channel(refine_scores(parts, pose_feats, poses, assoc, weights))


def merge_part_scores(regions, scene_parts):
    """Average region part scores back on the scene grid.

    `regions` holds (ZoomedRegion, H_r x W_r x 7 scores) pairs. Pixels no region
    covers keep `scene_parts`. Returns (labels, merged scores).
    """
    base = scene_parts.data.astype(np.float64)
    h, w = base.shape[:2]
    acc = np.zeros_like(base)
    count = np.zeros((h, w))
    yy, xx = np.mgrid[0:h, 0:w]
    for region, scores in regions:
        scores = np.asarray(scores, dtype=np.float64)
        rh, rw = scores.shape[:2]
        rx, ry = region.transform.px_to_region(xx, yy)
        inside = (rx >= -0.5) & (rx < rw - 0.5) & (ry >= -0.5) & (ry < rh - 0.5)
        if not inside.any():
            continue
        acc[inside] += sample_bilinear(scores, rx[inside], ry[inside])
        count[inside] += 1
    merged = base.copy()
    hit = count > 0
    merged[hit] = acc[hit] / count[hit][:, None]
    return argmax_channel(merged), merged
