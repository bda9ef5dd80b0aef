import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import blank_region
from pweaver import skeleton as sk
from pweaver.pairwise import (ALL_PAIRS, DEFAULT_ASSOCIATION, JointPartAssociation,
                              LogisticModel, TrainConfig, TrainingError, line_proportion,
                              neighbor_features, offset_geometry, pair_feature,
                              pair_probability, rect_iou, region_indicators, segment_features,
                              train_logistic, training_loss_history)
from pweaver.proposals import JointProposal


def test_offset_geometry_examples():
    assert offset_geometry((3, 4), (3, 4), (-3, -4), (-3, -4)) == [0, 0, 0, 0]
    d = offset_geometry((1, 0), (0, 1), (1, 0), (1, 0))
    assert d[1] == pytest.approx(math.sqrt(2)) and d[3] == pytest.approx(math.pi / 2)
    d = offset_geometry((2, 1), (-2, -1), (0, 1), (0, 1))
    assert d[3] == pytest.approx(math.pi)


def offset_region(h=40, w=40, fwd=(5.0, 0.0), back=(-5.0, 0.0), a=0, b=1):
    nbr = np.zeros((h, w, sk.NUM_NEIGHBOR_CHANNELS), np.float32)
    ca, cb = sk.neighbor_channel(a, b, 0), sk.neighbor_channel(b, a, 0)
    nbr[:, :, ca:ca + 2] = fwd
    nbr[:, :, cb:cb + 2] = back
    return blank_region(h, w, neighbors=nbr)


def test_neighbor_features_perfect_prediction():
    r = offset_region()
    ci, cj = JointProposal(10, 10, 0, 0.9), JointProposal(15, 10, 1, 0.9)
    assert neighbor_features(r, ci, cj) == pytest.approx([0, 0, 0, 0])


def test_neighbor_features_swap_symmetry():
    r = offset_region(fwd=(4.0, 2.0), back=(-7.0, 1.0))
    ci, cj = JointProposal(10, 10, 0, 0.9), JointProposal(16, 13, 1, 0.9)
    f = neighbor_features(r, ci, cj)
    g = neighbor_features(r, cj, ci)
    assert g == pytest.approx([f[1], f[0], f[3], f[2]])


def test_neighbor_features_errors():
    r = offset_region()
    with pytest.raises(ValueError):
        neighbor_features(r, JointProposal(10, 10, 0, 0.9), JointProposal(50, 10, 1, 0.9))
    with pytest.raises(ValueError):
        neighbor_features(r, JointProposal(10, 10, 0, 0.9), JointProposal(12, 10, 0, 0.9))


def test_region_indicators():
    labels = np.zeros((20, 20), np.int64)
    labels[2:18, 2:18] = sk.HEAD
    assert region_indicators(labels, (10, 10), sk.HEAD) == [1.0, 0.0]
    assert region_indicators(labels, (2, 10), sk.HEAD) == [1.0, 1.0]
    assert region_indicators(labels, (10, 10), sk.TORSO) == [0.0, 0.0]


def test_line_proportion_example():
    labels = np.zeros((10, 3), np.int64)
    labels[0:5, :] = sk.TORSO
    assert line_proportion(labels, (0, 0), (0, 8), sk.TORSO) == pytest.approx(5 / 9)


def test_rect_iou_examples():
    labels = np.zeros((20, 20), np.int64)
    labels[3:8, 0:11] = sk.UPPER_ARM
    assert rect_iou(labels, (0, 5), (10, 5), sk.UPPER_ARM) == pytest.approx(1.0)
    assert rect_iou(np.zeros((20, 20), np.int64), (0, 5), (10, 5), sk.UPPER_ARM) == 0.0


def test_non_edge_pairs_have_zero_tail():
    labels = np.full((30, 30), sk.TORSO, np.int64)
    for a, b in [(sk.FOREHEAD, sk.L_WRIST), (sk.L_SHOULDER, sk.R_SHOULDER), (sk.NECK, sk.L_KNEE)]:
        f = segment_features(labels, DEFAULT_ASSOCIATION, JointProposal(5, 5, a, .9),
                             JointProposal(20, 20, b, .9))
        assert f[6:] == [0.0, 0.0]
    f = segment_features(labels, DEFAULT_ASSOCIATION, JointProposal(5, 5, sk.NECK, .9),
                         JointProposal(20, 20, sk.L_WAIST, .9))
    assert f[6] == 1.0


def test_pair_feature_layout():
    r = offset_region()
    labels = np.zeros((40, 40), np.int64)
    # passed higher type first; the feature is built in canonical order anyway
    ci, cj = JointProposal(15, 10, 1, 0.9), JointProposal(10, 10, 0, 0.9)
    f = pair_feature(r, labels, DEFAULT_ASSOCIATION, ci, cj)
    g = pair_feature(r, labels, DEFAULT_ASSOCIATION, cj, ci)
    assert f.shape == (12,) and np.array_equal(f, g)
    assert f[:4] == pytest.approx([0, 0, 0, 0])
    off = pair_feature(r, labels, DEFAULT_ASSOCIATION, ci, cj, use_segments=False)
    assert not off[4:].any()
    same = pair_feature(r, labels, DEFAULT_ASSOCIATION, JointProposal(1, 1, 4, .5),
                        JointProposal(4, 5, 4, .5))
    assert same[0] == 5.0 and not same[1:].any()


def test_association_validation():
    with pytest.raises(ValueError):
        JointPartAssociation(joint_parts={k: () for k in range(14)})
    assert len(DEFAULT_ASSOCIATION.edge_parts) == 13


def const_model(w, b):
    wb = (np.asarray(w, float), float(b))
    return LogisticModel(pairs={k: wb for k in ALL_PAIRS}, pooled={"distinct": wb, "same": wb})


def test_probability_examples():
    assert pair_probability(const_model(np.zeros(12), 0), np.zeros(12), 0, 1) == 0.5
    assert pair_probability(const_model(np.zeros(12), math.log(9)), np.zeros(12), 0, 1) == \
        pytest.approx(0.9)
    m = const_model(np.ones(12), 0.0)
    vals = [pair_probability(m, np.full(12, -t), 0, 1) for t in (1, 10, 100, 1000)]
    assert vals == sorted(vals, reverse=True) and vals[-1] < 1e-100


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 11), st.floats(-5, 5), st.floats(0.01, 3))
def test_probability_monotone_in_each_feature(idx, base, step):
    w = np.linspace(-1, 1, 12)
    w[idx] = 0.7
    m = const_model(w, 0.1)
    f = np.full(12, base * 0.1)
    g = f.copy()
    g[idx] += step
    assert pair_probability(m, g, 2, 5) > pair_probability(m, f, 2, 5)


def separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 12))
    y = (X[:, 0] - 0.5 * X[:, 3] > 0).astype(float)
    X[:, 0] += np.where(y > 0, 0.5, -0.5)
    return X, y


def test_separable_accuracy():
    X, y = separable()
    samples = [(x, (0, 1), bool(t)) for x, t in zip(X, y)]
    model = train_logistic(samples)
    pred = np.array([pair_probability(model, x, 0, 1) >= 0.5 for x in X])
    assert (pred == (y > 0)).mean() >= 0.95


def test_loss_non_increasing():
    X, y = separable(seed=3)
    X[:, 5] *= 40.0   # badly scaled feature
    hist = training_loss_history(X, y)
    assert len(hist) == 300
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))
    assert hist[-1] < hist[0]


def test_single_class_pair_falls_back_to_pooled():
    X, y = separable()
    samples = [(x, (0, 1), bool(t)) for x, t in zip(X, y)]
    samples += [(x, (2, 3), True) for x in X[:10]]
    model = train_logistic(samples)
    w, b = model.weights(2, 3)
    wp, bp = model.pooled["distinct"]
    assert np.array_equal(w, wp) and b == bp
    assert "2-3" in model.meta["fallback_pairs"]
    assert model.weights(3, 2) is model.weights(2, 3)


def test_training_deterministic_and_duplication_invariant():
    X, y = separable(seed=5)
    samples = [(x, (0, 1), bool(t)) for x, t in zip(X, y)]
    a = train_logistic(samples).weights(0, 1)
    b = train_logistic(samples).weights(0, 1)
    c = train_logistic(samples + samples).weights(0, 1)
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]
    assert np.allclose(a[0], c[0], atol=1e-9) and a[1] == pytest.approx(c[1], abs=1e-9)


def test_empty_training_set():
    with pytest.raises(TrainingError):
        train_logistic([])


def test_model_json_roundtrip(tmp_path):
    X, y = separable()
    model = train_logistic([(x, (0, 1), bool(t)) for x, t in zip(X, y)], TrainConfig(iterations=50))
    model.save(tmp_path / "m.json")
    back = LogisticModel.load(tmp_path / "m.json")
    assert len(back.pairs) == 105
    for key in ALL_PAIRS:
        assert np.array_equal(back.pairs[key][0], model.pairs[key][0])
        assert back.pairs[key][1] == model.pairs[key][1]
    assert back.meta["iterations"] == 50
