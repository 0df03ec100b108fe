"""Procedural desk-scale scenes: a jittered road grid over textured terrain.

Scenes come with exact centerline geometry and label masks, so every stage
of the pipeline can be exercised without satellite data. Occluding blobs
painted over the imagery (tree canopy, building shadow stand-ins) hide road
evidence locally, which is what makes the historical-map prior and the
semi-supervised losses earn their keep at this scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import buffer_centerlines
from .types import RoadCenterlineSet


@dataclass
class SceneConfig:
    size: int = 512
    density: float = 0.5
    seed: int = 0
    occluders: bool = True

    def validate(self) -> "SceneConfig":
        if self.size % 16:
            raise ValueError(f"scene size {self.size} not divisible by 16")
        if self.density < 0:
            raise ValueError("density must be >= 0")
        return self


def _wavy_line(rng, size, horizontal, pos):
    """A mostly straight polyline across the scene with mild jitter."""
    n_pts = 4
    stations = np.linspace(2, size - 3, n_pts)
    offsets = pos + rng.uniform(-8, 8, size=n_pts)
    offsets = np.clip(offsets, 1, size - 2)
    if horizontal:
        return [(float(x), float(y)) for x, y in zip(stations, offsets)]
    return [(float(x), float(y)) for x, y in zip(offsets, stations)]


def _road_graph(cfg: SceneConfig, rng) -> RoadCenterlineSet:
    size = cfg.size
    polylines = []
    n_per_axis = int(round(cfg.density * size / 96.0))
    for horizontal in (True, False):
        if n_per_axis == 0:
            continue
        slots = np.linspace(0, size, n_per_axis + 2)[1:-1]
        for pos in slots:
            pos = float(np.clip(pos + rng.uniform(-size * 0.06, size * 0.06), 4, size - 5))
            cls = "primary" if rng.random() < 0.5 else "secondary"
            polylines.append((cls, _wavy_line(rng, size, horizontal, pos)))
    # occasional diagonal connector
    n_diag = rng.binomial(2, min(1.0, cfg.density * 0.6))
    for _ in range(n_diag):
        x0, y0 = rng.uniform(0, size - 1, 2)
        x1, y1 = rng.uniform(0, size - 1, 2)
        polylines.append(("secondary", [(float(x0), float(y0)), (float(x1), float(y1))]))
    return RoadCenterlineSet(polylines=polylines, scene_size=(size, size))


def _terrain(rng, size):
    """Low-frequency green/brown texture."""
    base = ndimage.gaussian_filter(rng.normal(size=(size, size)), sigma=size / 24.0)
    base = (base - base.min()) / (np.ptp(base) + 1e-9)
    img = np.empty((size, size, 3), dtype=np.float64)
    img[..., 0] = 70 + 60 * base
    img[..., 1] = 95 + 55 * base
    img[..., 2] = 55 + 45 * base
    return img


def _paint_blob(img, rng, size):
    cy, cx = rng.uniform(0, size, 2)
    ry = rng.uniform(6, 22)
    rx = rng.uniform(6, 22)
    ys, xs = np.mgrid[0:size, 0:size]
    blob = ((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2 <= 1.0
    color = (
        np.array([35, 70, 30]) if rng.random() < 0.7 else np.array([60, 58, 62])
    ) + rng.uniform(-8, 8, 3)
    img[blob] = color


def generate_synthetic_scene(cfg: SceneConfig):
    """Build one scene: (image HxWx3 uint8, centerlines, label HxW {0,1}).

    Deterministic for a fixed config; density 0 yields a blank label over
    pure texture.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    size = cfg.size

    centerlines = _road_graph(cfg, rng)
    label = buffer_centerlines(centerlines)

    img = _terrain(rng, size)
    road = label.astype(bool)
    asphalt = 105 + 18 * ndimage.gaussian_filter(rng.normal(size=(size, size)), 3.0)
    for ch in range(3):
        img[..., ch][road] = asphalt[road] + rng.uniform(-4, 4)

    if cfg.occluders:
        n_blobs = rng.poisson(3 + 10 * cfg.density)
        for _ in range(n_blobs):
            _paint_blob(img, rng, size)

    img += rng.normal(scale=5.0, size=img.shape)
    image = np.clip(img, 0, 255).astype(np.uint8)
    return image, centerlines, label
