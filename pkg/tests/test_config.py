import json

import pytest

from pweaver.config import ConfigError, RunConfig


def test_defaults():
    c = RunConfig()
    assert (c.proposal_threshold, c.proposal_distance, c.proposals_per_type) == (0.2, 16.0, 6)
    assert (c.detection_score, c.detection_iou, c.missing_joint_score) == (0.6, 0.6, 0.2)
    assert c.nms_thresholds == {"head": 0.65, "upper": 0.5, "lower": 0.5, "whole": 0.4}
    assert (c.zoom_pad, c.zoom_target, c.zoom_scale_min, c.zoom_scale_max) == (0.2, 256, 0.4, 4)


def test_load_and_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 3, "solver": "exact", "restarts": 2}))
    c = RunConfig.load(path)
    assert (c.seed, c.solver, c.restarts) == (3, "exact", 2)
    c2 = c.override(seed=9, solver=None)
    assert (c2.seed, c2.solver) == (9, "exact")
    assert RunConfig.from_dict(c2.to_dict()) == c2


@pytest.mark.parametrize("doc", [{"bogus": 1}, {"proposal_threshold": 1.5},
                                 {"solver": "magic"}, {"zoom_scale_min": 5.0},
                                 {"restarts": -1}])
def test_rejects_bad_configs(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc)


def test_solver_config():
    sc = RunConfig(solver="oracle", restarts=3).solver_config(seed=11)
    assert (sc.mode, sc.restarts, sc.seed) == ("oracle", 3, 11)
