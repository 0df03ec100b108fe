"""Whole-scene prediction: tile, forward, stitch with uniform averaging.

Tiles are laid out with a fixed stride (tile_size - overlap); the last row
and column are shifted back so every tile lies flush inside the scene.
Scenes smaller than one tile are edge-padded and cropped after stitching.
Overlapping predictions are averaged with equal weight per covering tile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .network.model import prepare_inputs


@dataclass
class TilingPlan:
    tile_size: int
    overlap: int
    origins: list[tuple[int, int]]  # (row, col), row-major
    scene_size: tuple[int, int]
    padded_size: tuple[int, int]

    @property
    def padded(self) -> bool:
        return self.padded_size != self.scene_size

    def validate(self) -> "TilingPlan":
        ph, pw = self.padded_size
        covered = np.zeros((ph, pw), dtype=bool)
        ts = self.tile_size
        for r, c in self.origins:
            if r < 0 or c < 0 or r + ts > ph or c + ts > pw:
                raise ValueError(f"tile at ({r},{c}) exceeds canvas {ph}x{pw}")
            covered[r:r + ts, c:c + ts] = True
        if not covered.all():
            raise ValueError("tiling plan does not cover the scene")
        if self.origins != sorted(self.origins):
            raise ValueError("origins must be row-major sorted")
        return self


def _axis_origins(dim: int, tile: int, stride: int) -> list[int]:
    if dim <= tile:
        return [0]
    xs = list(range(0, dim - tile + 1, stride))
    if xs[-1] != dim - tile:
        xs.append(dim - tile)
    return xs


def plan_tiles(scene_size: tuple[int, int], tile_size: int = 512,
               overlap: int = 64) -> TilingPlan:
    h, w = scene_size
    if tile_size % 16:
        raise ValueError("tile_size must be divisible by 16")
    if not 0 <= overlap < tile_size:
        raise ValueError("overlap must satisfy 0 <= overlap < tile_size")
    stride = tile_size - overlap
    ph, pw = max(h, tile_size), max(w, tile_size)
    rows = _axis_origins(ph, tile_size, stride)
    cols = _axis_origins(pw, tile_size, stride)
    origins = [(r, c) for r in rows for c in cols]
    return TilingPlan(tile_size=tile_size, overlap=overlap, origins=origins,
                      scene_size=(h, w), padded_size=(ph, pw)).validate()


def coverage_counts(plan: TilingPlan) -> np.ndarray:
    """How many tiles cover each canvas pixel (always >= 1)."""
    ph, pw = plan.padded_size
    ts = plan.tile_size
    counts = np.zeros((ph, pw), dtype=np.int32)
    for r, c in plan.origins:
        counts[r:r + ts, c:c + ts] += 1
    return counts


def make_model_predictor(model, device="cpu"):
    """Wrap a network into the (image_tile, map_tile) -> prob protocol."""
    model.eval()

    def predict(image_tile: np.ndarray, map_tile: np.ndarray) -> np.ndarray:
        img, map_ = prepare_inputs(image_tile, map_tile, device)
        with torch.no_grad():
            probs = torch.softmax(model(img, map_).logits, dim=1)
        return probs[0, 1].cpu().numpy()

    return predict


def predict_scene(image: np.ndarray, map_raster: np.ndarray, predictor,
                  tile_size: int = 512, overlap: int = 64,
                  plan: TilingPlan | None = None) -> np.ndarray:
    """Road-probability raster for an arbitrarily large scene.

    `predictor` is either a callable (image_tile, map_tile) -> (ts, ts)
    probability array or a network module, which gets wrapped.
    """
    h, w = image.shape[:2]
    if map_raster.shape[:2] != (h, w):
        raise ValueError("image and map must share the scene size")
    if plan is None:
        plan = plan_tiles((h, w), tile_size, overlap)
    if isinstance(predictor, torch.nn.Module):
        predictor = make_model_predictor(predictor)

    ph, pw = plan.padded_size
    if plan.padded:
        image = np.pad(image, ((0, ph - h), (0, pw - w), (0, 0)), mode="edge")
        map_raster = np.pad(map_raster, ((0, ph - h), (0, pw - w), (0, 0)),
                            mode="edge")

    ts = plan.tile_size
    acc = np.zeros((ph, pw), dtype=np.float64)
    counts = np.zeros((ph, pw), dtype=np.int32)
    for r, c in plan.origins:
        prob = np.asarray(predictor(image[r:r + ts, c:c + ts],
                                    map_raster[r:r + ts, c:c + ts]),
                          dtype=np.float64)
        if prob.shape != (ts, ts):
            raise ValueError(
                f"predictor returned {prob.shape}, expected {(ts, ts)}")
        acc[r:r + ts, c:c + ts] += prob
        counts[r:r + ts, c:c + ts] += 1
    return (acc / counts)[:h, :w]


def binarize(prob: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """prob > threshold as a {0,1} uint8 mask."""
    return (np.asarray(prob) > threshold).astype(np.uint8)
