"""End-to-end flow: boxes -> regions -> proposals -> CRF -> poses -> refined parts."""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import skeleton as sk
from .assembly import (extract_poses, merge_part_scores, pose_nms, rasterize_pose_features,
                       refine_scores, select_per_box)
from .config import RunConfig
from .inference import build_problem, cluster_objective, objective, solve
from .pairwise import DEFAULT_ASSOCIATION, LabelIndex, pair_feature
from .proposals import (DetectionBox, auto_zoom, filter_boxes, identity_region,
                        propose_joints)
from .tensor_io import argmax_channel


def stage_seed(root, *parts):
    """Independent integer seed for one stage / work item."""
    return int(np.random.SeedSequence([root, *parts]).generate_state(1)[0])


def run_parallel(fn, items, jobs=1):
    """Map `fn` over `items`, results in input order regardless of scheduling."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def gt_boxes(scene, jitter=0.0, seed=0):
    """Detection boxes from ground-truth person boxes, optionally jittered."""
    rng = np.random.default_rng([seed, 0xB0C5])
    boxes = []
    for p in scene.people:
        x, y, w, h = p.bbox
        if jitter > 0:
            dx, dy, dw, dh = rng.uniform(-jitter, jitter, 4)
            x, y = x + dx * w, y + dy * h
            w, h = w * (1 + dw), h * (1 + dh)
        boxes.append(DetectionBox((float(x), float(y), float(w), float(h)), 1.0))
    return boxes


def zoom(box, maps, cfg):
    return auto_zoom(box, maps, pad=cfg.zoom_pad, target_height=cfg.zoom_target,
                     scale_range=(cfg.zoom_scale_min, cfg.zoom_scale_max))


def proposals_for(region, cfg):
    return propose_joints(region, score_threshold=cfg.proposal_threshold,
                          distance=cfg.proposal_distance, per_type=cfg.proposals_per_type,
                          subpixel=cfg.subpixel)


@dataclass
class BoxResult:
    region: object
    problem: object
    labeling: object
    poses: list
    selected: object     # PoseConfiguration or None
    selected_cluster: list = field(default_factory=list)
    solve_seconds: float = 0.0


@dataclass
class SceneResult:
    poses: list
    part_labels: np.ndarray
    part_scores: np.ndarray
    boxes: list


def solve_box(index, box, maps, model, cfg, assoc=DEFAULT_ASSOCIATION):
    region = zoom(box, maps, cfg)
    props = proposals_for(region, cfg)
    labels = LabelIndex(argmax_channel(region.maps.parts))
    problem = build_problem(region, props, model, assoc, labels, use_segments=cfg.use_segments)
    t0 = time.perf_counter()
    labeling = solve(problem, cfg.solver_config(stage_seed(cfg.seed, 1, index)))
    elapsed = time.perf_counter() - t0
    poses = extract_poses(labeling, problem, region, index, cfg.missing_joint_score)
    chosen = select_per_box(poses, box)
    cluster = []
    if chosen is not None:
        cluster = labeling.clusters()[poses.index(chosen)]
    return BoxResult(region, problem, labeling, poses, chosen, cluster, elapsed)


def infer_scene(maps, boxes, model, cfg=RunConfig(), assoc=DEFAULT_ASSOCIATION):
    kept = filter_boxes(boxes, cfg.detection_score, cfg.detection_iou)
    results = [solve_box(i, b, maps, model, cfg, assoc) for i, b in enumerate(kept)]
    poses = pose_nms([r.selected for r in results if r.selected is not None],
                     cfg.nms_thresholds)

    weights = (cfg.refine_stick_weight, cfg.refine_joint_weight)
    refined = []
    for r in results:
        region = r.region
        local = [p.mapped(region.transform.px_to_region) for p in poses]
        feats = rasterize_pose_features(local, (region.height, region.width))
        refined.append((region, refine_scores(region.maps.parts, feats, local, assoc, weights)))
    labels, scores = merge_part_scores(refined, maps.parts)
    return SceneResult(poses=poses, part_labels=labels, part_scores=scores, boxes=results)


def match_proposals(proposals, region, scene):
    """Ground-truth person index per proposal (-1 for spurious ones)."""
    out = []
    for c in proposals:
        sx, sy = region.transform.px_to_scene(c.x, c.y)
        best, best_d = -1, math.inf
        for i, p in enumerate(scene.people):
            if not p.visible[c.joint_type]:
                continue
            d = math.dist((sx, sy), p.joints[c.joint_type])
            tol = 0.25 * math.dist(p.joints[sk.FOREHEAD], p.joints[sk.NECK])
            if d <= tol and d < best_d:
                best, best_d = i, d
        out.append(best)
    return out


def training_samples(scene, maps, boxes, cfg=RunConfig(), assoc=DEFAULT_ASSOCIATION):
    """(feature, type pair, same-person) samples from every box of one scene."""
    samples = []
    for box in filter_boxes(boxes, cfg.detection_score, cfg.detection_iou):
        region = zoom(box, maps, cfg)
        props = proposals_for(region, cfg)
        owner = match_proposals(props, region, scene)
        labels = LabelIndex(argmax_channel(region.maps.parts))
        for i in range(len(props)):
            for j in range(i + 1, len(props)):
                ci, cj = props[i], props[j]
                f = pair_feature(region, labels, assoc, ci, cj, use_segments=cfg.use_segments)
                same = owner[i] >= 0 and owner[i] == owner[j]
                samples.append((f, (ci.joint_type, cj.joint_type), same))
    return samples


def full_graph_problem(maps, model, cfg=RunConfig(), assoc=DEFAULT_ASSOCIATION):
    region = identity_region(maps)
    props = proposals_for(region, cfg)
    labels = LabelIndex(argmax_channel(maps.parts))
    return region, build_problem(region, props, model, assoc, labels,
                                 use_segments=cfg.use_segments)


def benchmark_scene(maps, boxes, model, cfg=RunConfig(), assoc=DEFAULT_ASSOCIATION):
    """Solve one scene as a single graph and as per-box graphs; report sizes, times, energies."""
    kept = filter_boxes(boxes, cfg.detection_score, cfg.detection_iou)
    per_box = [solve_box(i, b, maps, model, cfg, assoc) for i, b in enumerate(kept)]
    _, full = full_graph_problem(maps, model, cfg, assoc)
    t0 = time.perf_counter()
    full_lab = solve(full, cfg.solver_config(stage_seed(cfg.seed, 2)))
    full_time = time.perf_counter() - t0
    full_obj = objective(full, full_lab)
    box_obj = sum(cluster_objective(r.problem, r.selected_cluster) for r in per_box)
    box_time = sum(r.solve_seconds for r in per_box)
    return {
        "full_nodes": full.size,
        "box_nodes": [r.problem.size for r in per_box],
        "full_seconds": full_time,
        "box_seconds": box_time,
        "full_objective": full_obj,
        "box_objective": box_obj,
        "objective_gap": abs(box_obj - full_obj) / abs(full_obj) if full_obj else 0.0,
        "speedup": full_time / box_time if box_time > 0 else math.inf,
    }
