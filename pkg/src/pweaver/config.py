"""Run configuration: every tunable, its default and its admissible range."""

import json
from dataclasses import asdict, dataclass, fields, replace

from .inference import SolverConfig

_RANGES = {
    "proposal_threshold": (0.0, 1.0),
    "proposal_distance": (0.0, None),
    "proposals_per_type": (1, None),
    "detection_score": (0.0, 1.0),
    "detection_iou": (0.0, 1.0),
    "missing_joint_score": (1e-9, 1.0),
    "nms_head": (0.0, 1.0),
    "nms_upper": (0.0, 1.0),
    "nms_lower": (0.0, 1.0),
    "nms_whole": (0.0, 1.0),
    "zoom_pad": (0.0, 4.0),
    "zoom_target": (1.0, None),
    "zoom_scale_min": (1e-3, None),
    "zoom_scale_max": (1e-3, None),
    "refine_stick_weight": (0.0, None),
    "refine_joint_weight": (0.0, None),
    "exact_node_limit": (1, None),
    "restarts": (0, None),
    "move_cap": (1, None),
    "box_jitter": (0.0, 1.0),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    proposal_threshold: float = 0.2
    proposal_distance: float = 16.0
    proposals_per_type: int = 6
    subpixel: bool = True
    detection_score: float = 0.6
    detection_iou: float = 0.6
    missing_joint_score: float = 0.2
    nms_head: float = 0.65
    nms_upper: float = 0.5
    nms_lower: float = 0.5
    nms_whole: float = 0.4
    zoom_pad: float = 0.2          # total, half on each side
    zoom_target: float = 256.0
    zoom_scale_min: float = 0.4
    zoom_scale_max: float = 4.0
    refine_stick_weight: float = 0.5
    refine_joint_weight: float = 0.5
    use_segments: bool = True
    solver: str = "heuristic"
    exact_node_limit: int = 12
    restarts: int = 8
    move_cap: int = 10000
    box_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type in ("float", float) and isinstance(v, int) and not isinstance(v, bool):
                object.__setattr__(self, f.name, float(v))
                v = float(v)
            if f.name in _RANGES:
                lo, hi = _RANGES[f.name]
                if (lo is not None and v < lo) or (hi is not None and v > hi):
                    raise ConfigError(f"{f.name}={v} outside [{lo}, {hi}]")
        if self.zoom_scale_min > self.zoom_scale_max:
            raise ConfigError("zoom_scale_min exceeds zoom_scale_max")
        if self.solver not in ("exact", "heuristic", "oracle"):
            raise ConfigError(f"solver must be exact, heuristic or oracle, not {self.solver!r}")

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def override(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    def to_dict(self):
        return asdict(self)

    def solver_config(self, seed=None):
        return SolverConfig(mode=self.solver, exact_node_limit=self.exact_node_limit,
                            restarts=self.restarts, move_cap=self.move_cap,
                            seed=self.seed if seed is None else seed)

    @property
    def nms_thresholds(self):
        return {"head": self.nms_head, "upper": self.nms_upper,
                "lower": self.nms_lower, "whole": self.nms_whole}
