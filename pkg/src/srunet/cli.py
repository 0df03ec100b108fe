"""Operator entry points: dataset generation, training, evaluation,
prediction, vectorization, and change diffing.

One executable with subcommands.  Training reads a flat `key = value`
config file; any flag given on the command line wins over the file, which
wins over built-in defaults.  The environment variable SRUNET_SEED, when
set, overrides the seed everywhere.  Every run logs its fully resolved
configuration to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .dataio.augment import derive_seed
from .dataio.mapsim import simulate_historical_map
from .dataio.split import split_dataset
from .dataio.store import load_dataset, save_dataset
from .dataio.synth import SceneConfig, generate_synthetic_scene
from .dataio.types import Sample
from .infer import binarize, predict_scene
from .metrics import ConfusionCounts, confusion, scores
from .network.checkpoint import load_checkpoint, restore_models
from .network.model import NetworkConfig
from .objectives import ReCoConfig
from .postprocess import (
    change_summary,
    despeckle,
    diff_against_history,
    skeletonize,
    to_geojson,
    trace_polylines,
)
from .trainer import TrainConfig, evaluate_model, fit

# schema keys that default to None and therefore need an explicit type
_NONE_TYPES = {"max_steps": int, "data_dir": str, "out_dir": str}
_RUN_DEFAULTS = {"data_dir": None, "out_dir": None, "lab_ratio": 0.125,
                 "val_split": "val"}


def train_schema() -> dict:
    """Flat key -> default for everything the train command understands."""
    out = dict(_RUN_DEFAULTS)
    for f in dataclasses.fields(NetworkConfig):
        out[f.name] = getattr(NetworkConfig(), f.name)
    tc = TrainConfig()
    for f in dataclasses.fields(TrainConfig):
        if f.name == "reco":
            for rf in dataclasses.fields(ReCoConfig):
                out["reco_" + rf.name] = getattr(tc.reco, rf.name)
        else:
            out[f.name] = getattr(tc, f.name)
    return out


def _coerce(raw: str, key: str, default):
    if default is None:
        typ = _NONE_TYPES.get(key, str)
        return typ(raw)
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean {key}={raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(int(x) for x in raw.replace("(", "").replace(")", "").split(","))
    return raw


def parse_config_file(path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def resolve_train_config(config_path=None, overrides=None) -> dict:
    """defaults < config file < explicit flags < SRUNET_SEED."""
    schema = train_schema()
    resolved = dict(schema)
    if config_path is not None:
        for key, raw in parse_config_file(config_path).items():
            if key not in schema:
                raise ValueError(f"unknown config key {key!r}")
            resolved[key] = _coerce(raw, key, schema[key])
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        resolved[key] = _coerce(raw, key, schema[key])
    env_seed = os.environ.get("SRUNET_SEED")
    if env_seed is not None:
        resolved["seed"] = int(env_seed)
    return resolved


def build_configs(resolved: dict) -> tuple[NetworkConfig, TrainConfig]:
    net = NetworkConfig(**{f.name: resolved[f.name]
                           for f in dataclasses.fields(NetworkConfig)})
    reco = ReCoConfig(**{rf.name: resolved["reco_" + rf.name]
                         for rf in dataclasses.fields(ReCoConfig)})
    train_kwargs = {}
    for f in dataclasses.fields(TrainConfig):
        if f.name == "reco":
            train_kwargs["reco"] = reco
        else:
            train_kwargs[f.name] = resolved[f.name]
    return net.validate(), TrainConfig(**train_kwargs).validate()


def _log_config(command: str, payload: dict):
    print(f"{command} config: {json.dumps(payload, sort_keys=True, default=str)}",
          file=sys.stderr)


def _seed_override(seed: int) -> int:
    env = os.environ.get("SRUNET_SEED")
    return int(env) if env is not None else seed


def _load_rgb(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return np.array(Image.open(path).convert("RGB"))


def _load_mask(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return (np.array(Image.open(path).convert("L")) > 127).astype(np.uint8)


def _save_mask(path, mask: np.ndarray):
    Image.fromarray((mask.astype(np.uint8) * 255)).save(path)


def _save_prob16(path, prob: np.ndarray):
    scaled = np.rint(np.clip(prob, 0.0, 1.0) * 65535).astype(np.uint16)
    Image.fromarray(scaled).save(path)


def cmd_gen_synth(args) -> int:
    seed = _seed_override(args.seed)
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise FileExistsError(f"{out} is not empty (use --force to overwrite)")
    n_val = args.val_tiles if args.val_tiles is not None else (
        max(1, args.tiles // 5) if args.tiles > 1 else 0)
    if n_val >= args.tiles and args.tiles > 1:
        raise ValueError("val tiles must leave at least one training tile")
    _log_config("gen-synth", {"out": str(out), "tiles": args.tiles,
                              "size": args.size, "density": args.density,
                              "masked_ratio": args.masked_ratio, "seed": seed,
                              "val_tiles": n_val,
                              "occluders": not args.no_occluders})

    samples, assignment = [], {}
    road_fracs = []
    for i in range(args.tiles):
        scene_cfg = SceneConfig(size=args.size, density=args.density,
                                seed=derive_seed(seed, "scene", i),
                                occluders=not args.no_occluders)
        image, _, label = generate_synthetic_scene(scene_cfg)
        map_raster = simulate_historical_map(
            label, args.masked_ratio, seed=derive_seed(seed, "map", i))
        tile_id = f"tile{i:04d}"
        samples.append(Sample(image=image, map=map_raster, label=label,
                              tile_id=tile_id))
        assignment[tile_id] = "val" if i >= args.tiles - n_val else "train"
        road_fracs.append(float(label.mean()))
    save_dataset(out, samples, assignment,
                 meta={"size": args.size, "density": args.density,
                       "masked_ratio": args.masked_ratio, "seed": seed})
    print(json.dumps({
        "tiles": args.tiles,
        "train": args.tiles - n_val,
        "val": n_val,
        "road_fraction_mean": float(np.mean(road_fracs)),
    }))
    return 0


def cmd_train(args) -> int:
    overrides = {key: getattr(args, "opt_" + key) for key in train_schema()}
    resolved = resolve_train_config(args.config, overrides)
    if not resolved["data_dir"]:
        raise ValueError("data_dir is required (flag or config file)")
    if not resolved["out_dir"]:
        raise ValueError("out_dir is required (flag or config file)")
    _log_config("train", resolved)
    net_cfg, train_cfg = build_configs(resolved)

    train_samples = load_dataset(resolved["data_dir"], split="train")
    val_samples = load_dataset(resolved["data_dir"], split=resolved["val_split"])
    if not train_samples:
        raise ValueError(f"no training tiles under {resolved['data_dir']}")
    split = split_dataset(train_samples, resolved["lab_ratio"],
                          seed=train_cfg.seed)
    result = fit(split, net_cfg, train_cfg, val_samples,
                 out_dir=resolved["out_dir"])
    print(json.dumps({
        "best_iou": result.best_iou,
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.history),
        "steps": result.state.step,
        "checkpoint": str(result.best_path),
    }))
    return 0


def cmd_eval(args) -> int:
    if (args.ckpt is None) == (args.pred is None):
        raise ValueError("provide exactly one of --ckpt or --pred")
    _log_config("eval", {"data": args.data, "split": args.split,
                         "ckpt": args.ckpt, "pred": args.pred,
                         "threshold": args.threshold})
    samples = load_dataset(args.data, split=args.split)
    if not samples:
        raise ValueError(f"no tiles in split {args.split!r} under {args.data}")
    for s in samples:
        if s.label is None:
            raise ValueError(f"tile {s.tile_id} has no label")

    if args.ckpt is not None:
        _, teacher, _ = restore_models(load_checkpoint(args.ckpt))
        result = evaluate_model(teacher, samples, threshold=args.threshold)
    else:
        counts = ConfusionCounts()
        for s in samples:
            pred = _load_mask(Path(args.pred) / f"{s.tile_id}.png")
            counts = counts + confusion(pred, s.label)
        result = scores(counts)
        result["n_pixels"] = counts.total
    print(json.dumps(result))
    return 0


def cmd_predict(args) -> int:
    image = _load_rgb(args.image)
    map_raster = _load_rgb(args.map)
    _log_config("predict", {"ckpt": args.ckpt, "image": args.image,
                            "map": args.map, "out": args.out,
                            "tile_size": args.tile_size,
                            "overlap": args.overlap,
                            "threshold": args.threshold})
    _, teacher, _ = restore_models(load_checkpoint(args.ckpt))
    prob = predict_scene(image, map_raster, teacher,
                         tile_size=args.tile_size, overlap=args.overlap)
    mask = binarize(prob, args.threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _save_prob16(out / "prob.png", prob)
    _save_mask(out / "mask.png", mask)
    print(json.dumps({"prob": str(out / "prob.png"),
                      "mask": str(out / "mask.png"),
                      "road_fraction": float(mask.mean())}))
    return 0


def cmd_vectorize(args) -> int:
    _log_config("vectorize", {"mask": args.mask, "out": args.out,
                              "min_area": args.min_area,
                              "simplify": args.simplify})
    mask = _load_mask(args.mask)
    cleaned = despeckle(mask, args.min_area)
    vset = trace_polylines(skeletonize(cleaned), simplify_tol=args.simplify,
                           extend_into=cleaned)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(to_geojson(vset)))
    print(json.dumps({
        "n_polylines": len(vset.polylines),
        "total_length_px": sum(pl.length for pl in vset.polylines),
    }))
    return 0


def cmd_diff(args) -> int:
    _log_config("diff", {"new": args.new, "hist": args.hist, "out": args.out,
                         "buffer": args.buffer,
                         "unchanged_frac": args.unchanged_frac,
                         "removed_frac": args.removed_frac})
    new_mask = _load_mask(args.new)
    hist_mask = _load_mask(args.hist)
    vset = diff_against_history(new_mask, hist_mask, buffer_px=args.buffer,
                                unchanged_frac=args.unchanged_frac,
                                removed_frac=args.removed_frac)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(to_geojson(vset)))
    print(json.dumps(change_summary(vset)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srunet",
        description="Road updating: dual-input segmentation with "
                    "semi-supervised training and vector change reports.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--tiles", type=int, default=4)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--masked-ratio", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-tiles", type=int, default=None)
    p.add_argument("--no-occluders", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("train", help="train the network")
    p.add_argument("--config", default=None,
                   help="flat 'key = value' config file")
    for key in sorted(train_schema()):
        p.add_argument("--" + key.replace("_", "-"), dest="opt_" + key,
                       default=None, metavar="V",
                       help=f"override config key {key}")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or predictions")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="val")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--pred", default=None,
                   help="directory of predicted <tile_id>.png masks")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict a whole scene")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tile-size", type=int, default=512)
    p.add_argument("--overlap", type=int, default=64)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("vectorize", help="mask -> GeoJSON centerlines")
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-area", type=int, default=64)
    p.add_argument("--simplify", type=float, default=1.5)
    p.set_defaults(func=cmd_vectorize)

    p = sub.add_parser("diff", help="change report: new mask vs historical")
    p.add_argument("--new", required=True)
    p.add_argument("--hist", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--buffer", type=float, default=8.0)
    p.add_argument("--unchanged-frac", type=float, default=0.8)
    p.add_argument("--removed-frac", type=float, default=0.2)
    p.set_defaults(func=cmd_diff)
    return parser


def entrypoint(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(entrypoint())
