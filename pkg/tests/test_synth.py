import json

import numpy as np
import pytest

from pweaver import skeleton as sk
from pweaver.geometry import segment_distance
from pweaver.synth import (GenerationError, NoiseSpec, SkeletonModel, load_scene,
                           render_score_maps, sample_scene, save_scene)
from pweaver.tensor_io import argmax_channel

MODEL = SkeletonModel()


def test_sample_scene_deterministic():
    a = sample_scene(MODEL, 3, (320, 320), 42)
    b = sample_scene(MODEL, 3, (320, 320), 42)
    for p, q in zip(a.people, b.people):
        assert np.array_equal(p.joints, q.joints)
        assert np.array_equal(p.part_mask, q.part_mask)
        assert p.depth_rank == q.depth_rank
    assert np.array_equal(a.part_labels(), b.part_labels())


def test_single_person_fully_visible():
    s = sample_scene(MODEL, 1, (400, 400), 5)
    p = s.people[0]
    assert p.visible.all()
    assert ((p.joints >= 0) & (p.joints < 400)).all()


def test_bbox_contains_mask():
    s = sample_scene(MODEL, 4, (320, 320), 9)
    for p in s.people:
        ys, xs = np.nonzero(p.part_mask)
        x, y, w, h = p.bbox
        assert xs.min() >= x and xs.max() < x + w
        assert ys.min() >= y and ys.max() < y + h


def test_limb_pixels_within_half_width():
    s = sample_scene(MODEL, 2, (320, 320), 13)
    limb_parts = {sk.UPPER_ARM, sk.LOWER_ARM, sk.UPPER_LEG, sk.LOWER_LEG}
    for p in s.people:
        for (a, b), part in sk.EDGE_PART.items():
            if part not in limb_parts:
                continue
            # pixels of this part closest to this edge must lie within its half width
            ys, xs = np.nonzero(p.part_mask == part)
            length = np.linalg.norm(p.joints[a] - p.joints[b])
            half = MODEL.limb_width_ratio * length / 2
            d = segment_distance(xs.astype(float), ys.astype(float), p.joints[a], p.joints[b])
            other = [segment_distance(xs.astype(float), ys.astype(float), p.joints[c], p.joints[e])
                     for (c, e), q in sk.EDGE_PART.items() if q == part and (c, e) != (a, b)]
            mine = d <= np.min(other, axis=0) if other else np.ones_like(d, bool)
            assert (d[mine] <= half + 1.0).all()


def test_overlap_resolved_by_depth():
    s = sample_scene(MODEL, 4, (320, 320), 21)
    labels, owner = s.composite()
    for i, p in enumerate(s.people):
        mine = owner == i
        assert (labels[mine] == p.part_mask[mine]).all()
        # pixels this person covers but does not own belong to a deeper-ranked person
        lost = (p.part_mask > 0) & ~mine
        assert all(s.people[o].depth_rank > p.depth_rank for o in np.unique(owner[lost]))


def test_canvas_too_small():
    with pytest.raises(GenerationError):
        sample_scene(MODEL, 4, (40, 40), 0)


def test_zero_noise_maps_are_exact():
    s = sample_scene(MODEL, 3, (320, 320), 4)
    maps = render_score_maps(s, NoiseSpec.zero(), 4)
    j = maps.joints.data
    for p in s.people:
        for k in range(sk.NUM_JOINTS):
            x, y = p.joints[k].astype(int)
            win = j[max(y - 3, 0):y + 4, max(x - 3, 0):x + 4, k]
            assert j[y, x, k] == win.max()
    assert np.array_equal(argmax_channel(maps.parts), s.part_labels())
    p = s.people[0]
    fx, fy = p.joints[sk.FOREHEAD].astype(int)
    c = sk.neighbor_channel(sk.FOREHEAD, sk.NECK, 0)
    off = maps.neighbors.data[fy, fx, c:c + 2]
    assert np.allclose(off, p.joints[sk.NECK] - p.joints[sk.FOREHEAD])


def test_noisy_maps_stay_in_range():
    s = sample_scene(MODEL, 2, (200, 200), 8)
    maps = render_score_maps(s, NoiseSpec.moderate(), 8)
    for t in (maps.joints, maps.parts):
        assert t.data.min() >= 0 and t.data.max() <= 1
    again = render_score_maps(s, NoiseSpec.moderate(), 8)
    assert maps.neighbors == again.neighbors and maps.joints == again.joints


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(part_flip_rate=1.5)
    with pytest.raises(ValueError):
        NoiseSpec(offset_noise_sd=-1)


def test_skeleton_rejects_cycles():
    edges = list(sk.EDGES)
    edges[-1] = (sk.FOREHEAD, sk.NECK)
    with pytest.raises(ValueError):
        SkeletonModel(edges=tuple(edges))


def test_save_load_roundtrip(tmp_path):
    s = sample_scene(MODEL, 2, (240, 260), 2)
    save_scene(s, tmp_path)
    doc = json.loads((tmp_path / "gt.json").read_text())
    assert set(doc) >= {"height", "width", "people"}
    back = load_scene(tmp_path)
    assert np.array_equal(back.part_labels(), s.part_labels())
    labels, owner = s.composite()
    for i, (p, q) in enumerate(zip(s.people, back.people)):
        assert np.array_equal(p.visible, q.visible)
        assert np.allclose(p.joints[p.visible], q.joints[q.visible])
        assert q.depth_rank == p.depth_rank
        # only the visible (owned) part pixels survive the roundtrip
        assert np.array_equal(q.part_mask, np.where(owner == i, labels, 0))
