import numpy as np
import pytest

from pweaver import skeleton as sk
from pweaver.pairwise import train_logistic
from pweaver.pipeline import gt_boxes, training_samples
from pweaver.proposals import identity_region
from pweaver.synth import NoiseSpec, SkeletonModel, render_score_maps, sample_scene
from pweaver.tensor_io import ScoreMapSet, Tensor3


def blank_maps(h, w, joints=None, parts=None, neighbors=None):
    j = np.zeros((h, w, sk.NUM_JOINTS), np.float32) if joints is None else joints
    n = np.zeros((h, w, sk.NUM_NEIGHBOR_CHANNELS), np.float32) if neighbors is None else neighbors
    if parts is None:
        parts = np.zeros((h, w, sk.NUM_PARTS), np.float32)
        parts[:, :, 0] = 1.0
    return ScoreMapSet(joints=Tensor3(j), neighbors=Tensor3(n), parts=Tensor3(parts))


def blank_region(h, w, **kw):
    return identity_region(blank_maps(h, w, **kw))


def make_scene(seed, n_people, noise=None, canvas=(320, 320)):
    scene = sample_scene(SkeletonModel(), n_people, canvas, seed)
    maps = render_score_maps(scene, noise or NoiseSpec.zero(), seed)
    return scene, maps


@pytest.fixture(scope="session")
def small_model():
    """Pairwise model trained on a handful of mixed-noise scenes."""
    samples = []
    for i in range(6):
        noise = NoiseSpec.zero() if i % 2 == 0 else NoiseSpec.moderate()
        scene, maps = make_scene(900 + i, 1 + i % 4, noise)
        samples += training_samples(scene, maps, gt_boxes(scene))
    return train_logistic(samples)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
