"""Command-line entry point: synth, train, infer, eval, bench.

Dataset layout written by `synth` and read by the other subcommands::

    <data>/manifest.json              {"scenes": [{"name", "files"}], ...}
    <data>/<scene>/gt.json            ground-truth people
    <data>/<scene>/parts_gt.pwt       composite part labels (1 channel)
    <data>/<scene>/instances.pwt      owner map, person index + 1, 0 = background
    <data>/<scene>/joints.pwt         14-channel joint scores
    <data>/<scene>/neighbors.pwt      364-channel neighbor offsets
    <data>/<scene>/parts.pwt          7-channel part scores
    <data>/<scene>/boxes.json         {"boxes": [{"x", "y", "w", "h", "score"}]}

`infer` writes <out>/<scene>/poses.json and parts_pred.pwt (plus overlay.ppm
with --overlay). Wall-clock measurements from `bench` go to timing.json, kept
apart from bench.json so that every other artifact is reproducible byte for byte.
"""

import argparse
import json
import logging
import os
import sys
from functools import partial
from pathlib import Path

import numpy as np

from . import skeleton as sk
from .assembly import PoseConfiguration
from .config import ConfigError, RunConfig
from .inference import CapacityError
from .metrics import EvalReport, IouAccumulator, SizeBinnedIou, adk, joint_ap
from .pairwise import (LogisticModel, ModelError, TrainConfig, TrainingError, pair_probability,
                       train_logistic)
from .pipeline import (benchmark_scene, gt_boxes, infer_scene, run_parallel, stage_seed,
                       training_samples)
from .proposals import DetectionBox
from .synth import (NoiseSpec, SkeletonModel, load_scene, render_score_maps, sample_scene,
                    save_scene)
from .tensor_io import ScoreMapSet, Tensor3, TensorFormatError, load_tensor, save_tensor

log = logging.getLogger("pweaver")

MAP_FILES = ("joints.pwt", "neighbors.pwt", "parts.pwt")
SCENE_FILES = ("gt.json", "parts_gt.pwt", "instances.pwt") + MAP_FILES + ("boxes.json",)
NOISE_PRESETS = {"zero": NoiseSpec.zero, "moderate": NoiseSpec.moderate}
PALETTE = np.array([[0, 0, 0], [220, 60, 60], [60, 160, 60], [60, 90, 220],
                    [230, 200, 40], [170, 60, 200], [40, 200, 200]], dtype=np.uint8)


class InputError(Exception):
    """Bad or missing user input; maps to exit code 2."""


# ---- dataset helpers ---------------------------------------------------------

def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"missing file: {path}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON ({e})") from None


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def scene_dirs(data):
    """Scene directories of a dataset, in manifest order.

    A directory without a manifest that holds score maps is treated as a
    single-scene dataset.
    """
    data = Path(data)
    if not data.is_dir():
        raise InputError(f"dataset directory not found: {data}")
    manifest = data / "manifest.json"
    if manifest.exists():
        doc = _read_json(manifest)
        try:
            return [data / s["name"] for s in doc["scenes"]]
        except (KeyError, TypeError):
            raise InputError(f"{manifest}: expected {{'scenes': [{{'name': ...}}]}}") from None
    if (data / "joints.pwt").exists():
        return [data]
    raise InputError(f"{data} has neither manifest.json nor score maps")


def load_maps(d):
    try:
        j, n, p = (load_tensor(d / f) for f in MAP_FILES)
        return ScoreMapSet(joints=j, neighbors=n, parts=p)
    except FileNotFoundError as e:
        raise InputError(f"missing score map: {e.filename}") from None
    except (TensorFormatError, ValueError) as e:
        raise InputError(f"{d}: {e}") from None


def load_boxes(d):
    doc = _read_json(d / "boxes.json")
    try:
        return [DetectionBox((float(b["x"]), float(b["y"]), float(b["w"]), float(b["h"])),
                             float(b.get("score", 1.0))) for b in doc["boxes"]]
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"{d / 'boxes.json'}: bad box entry ({e})") from None


def load_gt(d):
    try:
        return load_scene(d)
    except FileNotFoundError as e:
        raise InputError(f"missing ground truth: {e.filename}") from None
    except (TensorFormatError, ValueError, KeyError, json.JSONDecodeError) as e:
        raise InputError(f"{d}: unreadable ground truth ({e})") from None


def load_model(path):
    if path is None:
        raise InputError("--model is required")
    try:
        return LogisticModel.from_json(_read_json(path))
    except (ModelError, KeyError, TypeError, ValueError) as e:
        raise InputError(f"{path}: not a pairwise model ({e})") from None


def _out_dir(args):
    if args.out_dir is None:
        raise InputError("--out-dir is required")
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InputError(f"cannot create output directory {out}: {e.strerror}") from None
    if not os.access(out, os.W_OK):
        raise InputError(f"output directory not writable: {out}")
    return out


# ---- synth -----------------------------------------------------------------

def _synth_one(i, out, cfg, opts):
    seed = stage_seed(cfg.seed, 10, i)
    rng = np.random.default_rng(seed)
    n_people = int(rng.integers(opts["min_people"], opts["max_people"] + 1))
    scene = sample_scene(SkeletonModel(), n_people, (opts["height"], opts["width"]), seed)
    maps = render_score_maps(scene, NOISE_PRESETS[opts["noise"]](), stage_seed(cfg.seed, 11, i))
    name = f"scene_{i:04d}"
    d = out / name
    d.mkdir(exist_ok=True)
    save_scene(scene, d)
    for fname, t in zip(MAP_FILES, (maps.joints, maps.neighbors, maps.parts)):
        save_tensor(t, d / fname)
    boxes = gt_boxes(scene, cfg.box_jitter, stage_seed(cfg.seed, 12, i))
    _write_json(d / "boxes.json", {"boxes": [
        {"x": b.rect[0], "y": b.rect[1], "w": b.rect[2], "h": b.rect[3], "score": b.score}
        for b in boxes]})
    return {"name": name, "people": n_people, "files": sorted(SCENE_FILES)}


def cmd_synth(args, cfg):
    if args.n < 0:
        raise InputError("--n must be non-negative")
    if not 1 <= args.min_people <= args.max_people:
        raise InputError("need 1 <= --min-people <= --max-people")
    out = _out_dir(args)
    opts = {"min_people": args.min_people, "max_people": args.max_people,
            "height": args.height, "width": args.width, "noise": args.noise}
    scenes = run_parallel(partial(_synth_one, out=out, cfg=cfg, opts=opts),
                          range(args.n), args.jobs)
    _write_json(out / "manifest.json", {"seed": cfg.seed, "noise": args.noise,
                                        "canvas": [args.height, args.width],
                                        "box_jitter": cfg.box_jitter, "scenes": scenes})
    log.info("wrote %d scenes to %s", len(scenes), out)
    return 0


# ---- train -----------------------------------------------------------------

def _samples_one(d, cfg):
    scene = load_gt(d)
    return training_samples(scene, load_maps(d), load_boxes(d), cfg)


def cmd_train(args, cfg):
    dirs = scene_dirs(args.data)
    if not dirs:
        raise InputError(f"dataset {args.data} is empty")
    out = _out_dir(args)
    per_scene = run_parallel(partial(_samples_one, cfg=cfg), dirs, args.jobs)
    samples = [s for group in per_scene for s in group]
    try:
        model = train_logistic(samples, TrainConfig(iterations=args.iterations, seed=cfg.seed))
    except TrainingError as e:
        raise InputError(f"cannot train: {e}") from None
    correct = sum((pair_probability(model, f, *types) >= 0.5) == bool(same)
                  for f, types, same in samples)
    positives = sum(bool(s[2]) for s in samples)
    model.meta["use_segments"] = cfg.use_segments
    model.save(out / "model.json")
    train_log = {"scenes": len(dirs), "samples": len(samples), "positives": positives,
                 "accuracy": correct / len(samples), "fallback_pairs": model.meta["fallback_pairs"]}
    _write_json(out / "train_log.json", train_log)
    log.info("trained on %d pairs from %d scenes, accuracy %.3f",
             len(samples), len(dirs), train_log["accuracy"])
    return 0


# ---- infer -----------------------------------------------------------------

def overlay_image(labels, poses):
    """RGB uint8 picture: part colours with joints and limbs drawn in white."""
    from .assembly import rasterize_pose_features
    img = PALETTE[np.asarray(labels, dtype=np.int64)].copy()
    feats = rasterize_pose_features(poses, labels.shape).data
    img[feats[:, :, 1] > 0] = (img[feats[:, :, 1] > 0] // 2) + 127
    img[feats[:, :, 0] > 0] = 255
    return img


def write_ppm(path, img):
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def _infer_one(item, out, model, cfg, overlay):
    index, d = item
    maps = load_maps(d)
    boxes = load_boxes(d)
    scene_cfg = cfg.override(seed=stage_seed(cfg.seed, 20, index))
    try:
        result = infer_scene(maps, boxes, model, scene_cfg)
    except CapacityError as e:
        raise InputError(f"{d.name}: {e}") from None
    dest = out / d.name
    dest.mkdir(exist_ok=True)
    _write_json(dest / "poses.json", {"poses": [p.to_json() for p in result.poses]})
    save_tensor(Tensor3(result.part_labels.astype(np.float32)), dest / "parts_pred.pwt")
    if overlay:
        write_ppm(dest / "overlay.ppm", overlay_image(result.part_labels, result.poses))
    return {"name": d.name, "poses": len(result.poses)}


def cmd_infer(args, cfg):
    dirs = scene_dirs(args.data)
    model = load_model(args.model)
    out = _out_dir(args)
    done = run_parallel(partial(_infer_one, out=out, model=model, cfg=cfg, overlay=args.overlay),
                        list(enumerate(dirs)), args.jobs)
    _write_json(out / "manifest.json", {"scenes": done, "config": cfg.to_dict()})
    log.info("inferred %d scenes", len(done))
    return 0


# ---- eval ------------------------------------------------------------------

def load_poses(path):
    doc = _read_json(path)
    try:
        return [PoseConfiguration.from_json(p) for p in doc["poses"]]
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"{path}: bad pose entry ({e})") from None


def _eval_one(d, pred_root):
    scene = load_gt(d)
    poses = load_poses(pred_root / d.name / "poses.json")
    try:
        labels = load_tensor(pred_root / d.name / "parts_pred.pwt").data[:, :, 0]
    except FileNotFoundError as e:
        raise InputError(f"missing prediction: {e.filename}") from None
    except TensorFormatError as e:
        raise InputError(str(e)) from None
    gt_labels, owner = scene.composite()
    if labels.shape != gt_labels.shape:
        raise InputError(f"{d.name}: predicted part map {labels.shape} vs ground truth "
                         f"{gt_labels.shape}")
    return poses, scene.people, labels.astype(np.int64), gt_labels, owner


def cmd_eval(args, cfg):
    dirs = scene_dirs(args.data)
    if args.pred is None:
        raise InputError("--pred is required")
    pred_root = Path(args.pred)
    out = _out_dir(args)
    rows = run_parallel(partial(_eval_one, pred_root=pred_root), dirs, args.jobs)
    images = [(poses, people) for poses, people, *_ in rows]
    iou, sized = IouAccumulator(), SizeBinnedIou()
    for _, _, labels, gt_labels, owner in rows:
        iou.add(labels, gt_labels)
        sized.add(labels, gt_labels, owner)
    ap, mean_ap = joint_ap(images)
    per_adk, mean_adk, skipped = adk(images)
    report = EvalReport(per_joint_ap=ap, map=mean_ap, per_joint_adk=per_adk, mean_adk=mean_adk,
                        adk_skipped=skipped, per_part_iou=iou.per_class(), miou=iou.miou(),
                        size_miou=sized.result())
    _write_json(out / "report.json", report.to_json())
    table = report.to_table()
    with open(out / "report.txt", "w") as fh:
        fh.write(table)
    sys.stdout.write(table)
    return 0


# ---- bench -----------------------------------------------------------------

def _bench_one(item, model, cfg):
    index, d = item
    scene_cfg = cfg.override(seed=stage_seed(cfg.seed, 30, index))
    try:
        row = benchmark_scene(load_maps(d), load_boxes(d), model, scene_cfg)
    except CapacityError as e:
        raise InputError(f"{d.name}: {e}") from None
    row["name"] = d.name
    return row


def cmd_bench(args, cfg):
    dirs = scene_dirs(args.data)
    model = load_model(args.model)
    out = _out_dir(args)
    # timings are only comparable when scenes are solved one after another
    rows = [_bench_one(item, model, cfg) for item in enumerate(dirs)]
    timed = ("full_seconds", "box_seconds", "speedup")
    full_t = sum(r["full_seconds"] for r in rows)
    box_t = sum(r["box_seconds"] for r in rows)
    gaps = [r["objective_gap"] for r in rows]
    _write_json(out / "bench.json", {
        "solver": cfg.solver,
        "scenes": [{k: v for k, v in r.items() if k not in timed} for r in rows],
        "max_objective_gap": max(gaps) if gaps else 0.0,
        "gap_within_5pct": all(g <= 0.05 for g in gaps),
    })
    summary = {"full_seconds": full_t, "box_seconds": box_t,
               "speedup": full_t / box_t if box_t > 0 else None,
               "scenes": [{"name": r["name"], **{k: r[k] for k in timed}} for r in rows]}
    _write_json(out / "timing.json", summary)
    sp = summary["speedup"]
    print(f"scenes {len(rows)}  full {full_t:.3f}s  per-box {box_t:.3f}s  "
          f"speedup {'n/a' if sp is None else f'{sp:.2f}x'}  "
          f"max objective gap {100 * (max(gaps) if gaps else 0.0):.2f}%")
    return 0


# ---- plumbing --------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--seed", type=int, help="root seed (overrides config)")
    common.add_argument("--solver", choices=("exact", "heuristic", "oracle"))
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = argparse.ArgumentParser(prog="pweaver", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--n", type=int, default=10, help="number of scenes")
    s.add_argument("--min-people", type=int, default=1)
    s.add_argument("--max-people", type=int, default=4)
    s.add_argument("--height", type=int, default=320)
    s.add_argument("--width", type=int, default=320)
    s.add_argument("--noise", choices=sorted(NOISE_PRESETS), default="moderate")

    t = sub.add_parser("train", parents=[common], help="fit the pairwise logistic model")
    t.add_argument("--data", required=True)
    t.add_argument("--iterations", type=int, default=TrainConfig.iterations)

    i = sub.add_parser("infer", parents=[common], help="assemble poses and refine parts")
    i.add_argument("--data", required=True)
    i.add_argument("--model")
    i.add_argument("--overlay", action="store_true", help="also write overlay.ppm per scene")

    e = sub.add_parser("eval", parents=[common], help="score predictions against ground truth")
    e.add_argument("--data", required=True)
    e.add_argument("--pred", help="directory written by infer")

    b = sub.add_parser("bench", parents=[common], help="full graph vs per-box graphs")
    b.add_argument("--data", required=True)
    b.add_argument("--model")
    return p


def resolve_config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    return cfg.override(seed=args.seed, solver=args.solver)


def _fail(code, kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None):
    logging.basicConfig(level=os.environ.get("PWEAVER_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    if args.jobs < 1:
        return _fail(2, "bad_input", "--jobs must be at least 1")
    handlers = {"synth": cmd_synth, "train": cmd_train, "infer": cmd_infer,
                "eval": cmd_eval, "bench": cmd_bench}
    try:
        cfg = resolve_config(args)
        return handlers[args.command](args, cfg)
    except FileNotFoundError as e:
        return _fail(2, "bad_input", f"missing file: {e.filename}")
    except (InputError, ConfigError, json.JSONDecodeError) as e:
        return _fail(2, "bad_input", str(e))
    except Exception as e:  # noqa: BLE001 - last-resort reporting
        log.debug("internal error", exc_info=True)
        return _fail(1, "internal", f"{type(e).__name__}: {e}")


if __name__ == "__main__":
    sys.exit(main())
