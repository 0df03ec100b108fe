"""Scaled-down experiment harnesses: overfit sanity and the ablation grid
(full model vs supervised-only vs no-map) on synthetic tiles."""

from __future__ import annotations

import statistics
import time
from dataclasses import replace

from .dataio.augment import derive_seed
from .dataio.mapsim import simulate_historical_map
from .dataio.split import split_dataset
from .dataio.synth import SceneConfig, generate_synthetic_scene
from .dataio.types import Sample
from .network.model import NetworkConfig
from .trainer import TrainConfig, fit


def build_synth_samples(n_tiles: int, size: int = 128, masked_ratio: float = 0.3,
                        density: float = 0.5, base_seed: int = 0,
                        occluders: bool = True,
                        id_prefix: str = "tile") -> list[Sample]:
    """Generate aligned (image, simulated historical map, label) tiles."""
    samples = []
    for i in range(n_tiles):
        cfg = SceneConfig(size=size, density=density,
                          seed=derive_seed(base_seed, "scene", i),
                          occluders=occluders)
        image, _, label = generate_synthetic_scene(cfg)
        map_raster = simulate_historical_map(
            label, masked_ratio, seed=derive_seed(base_seed, "map", i))
        samples.append(Sample(image=image, map=map_raster, label=label,
                              tile_id=f"{id_prefix}{i:04d}"))
    return samples


def tiny_network_config(size: int = 128, **kwargs) -> NetworkConfig:
    return NetworkConfig(width_preset="tiny", input_size=(size, size),
                         **kwargs).validate()


# ablation grid: name -> (network overrides, training overrides)
VARIANTS = {
    "full": ({}, {}),
    "supervised_only": ({}, {"alpha_unsup": 0.0, "alpha_ctr": 0.0}),
    "without_map": ({"use_map": False}, {}),
}


def run_overfit(n_tiles: int = 8, size: int = 128, steps: int = 300,
                lr0: float = 0.01, batch_labeled: int = 4, seed: int = 0,
                out_dir=None) -> dict:
    """Fit the tiny model on a handful of fully labeled tiles and report the
    training-set road IoU of the final student."""
    from .trainer import evaluate_model

    samples = build_synth_samples(n_tiles, size=size, base_seed=seed)
    split = split_dataset(samples, lab_ratio=1.0, seed=seed)
    net_cfg = tiny_network_config(size)
    cfg = TrainConfig(lr0=lr0, epochs=10_000, max_steps=steps,
                      batch_labeled=batch_labeled,
                      alpha_unsup=0.0, alpha_ctr=0.0, augment=False,
                      seed=seed)
    t0 = time.time()
    result = fit(split, net_cfg, cfg, val_samples=samples, out_dir=out_dir)
    train_scores = evaluate_model(result.state.student, samples)
    return {
        "train_iou_student": train_scores["iou_road"],
        "train_iou_teacher": result.history[-1]["val_iou"],
        "steps": result.state.step,
        "seconds": time.time() - t0,
        "history": result.history,
    }


def run_ablation(n_tiles: int = 200, n_val: int = 32, size: int = 128,
                 lab_ratio: float = 0.125, seeds=(0, 1, 2), epochs: int = 20,
                 masked_ratio: float = 0.3, density: float = 0.5,
                 data_seed: int = 7, lr0: float = 0.01,
                 variants=("full", "supervised_only", "without_map"),
                 train_overrides=None, out_dir=None, log=None) -> dict:
    """Train every ablation variant over several seeds on one shared dataset.

    `train_overrides` applies to every variant (variant-specific settings win).
    Returns per-variant best validation IoUs plus the mean deltas of the
    full model against each ablation.
    """
    shared_over = dict(train_overrides or {})
    train_pool = build_synth_samples(n_tiles, size=size,
                                     masked_ratio=masked_ratio,
                                     density=density, base_seed=data_seed)
    val_pool = build_synth_samples(n_val, size=size, masked_ratio=masked_ratio,
                                   density=density,
                                   base_seed=derive_seed(data_seed, "val"),
                                   id_prefix="val")

    results: dict[str, list[float]] = {name: [] for name in variants}
    runs = []
    for seed in seeds:
        split = split_dataset(train_pool, lab_ratio, seed=seed)
        for name in variants:
            net_over, train_over = VARIANTS[name]
            net_cfg = tiny_network_config(size, **net_over)
            cfg = TrainConfig(lr0=lr0, epochs=epochs, seed=seed,
                              **{**shared_over, **train_over})
            t0 = time.time()
            run_dir = None
            if out_dir is not None:
                run_dir = f"{out_dir}/{name}_seed{seed}"
            res = fit(split, net_cfg, cfg, val_samples=val_pool,
                      out_dir=run_dir)
            dt = time.time() - t0
            results[name].append(res.best_iou)
            runs.append({"variant": name, "seed": seed,
                         "best_iou": res.best_iou, "seconds": dt})
            if log is not None:
                log(f"{name} seed={seed}: best val IoU {res.best_iou:.4f} "
                    f"({dt:.0f}s)")

    means = {name: statistics.mean(vals) for name, vals in results.items()}
    out = {"iou": results, "mean_iou": means, "runs": runs}
    if "full" in means and "supervised_only" in means:
        out["delta_vs_supervised"] = means["full"] - means["supervised_only"]
    if "full" in means and "without_map" in means:
        out["delta_vs_without_map"] = means["full"] - means["without_map"]
    return out
