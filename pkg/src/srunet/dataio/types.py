"""Core dataset records: aligned image/map/label tiles and road centerlines."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

PRIMARY_BUFFER_PX = 7
SECONDARY_BUFFER_PX = 4

ROAD_CLASSES = ("primary", "secondary")


@dataclass
class Sample:
    """One aligned tile: latest image, rasterized historical map, optional label.

    image and map are HxWx3 uint8; label, when present, is HxW uint8 with
    values in {0, 1} (1 = road). H and W must be divisible by 16.
    """

    image: np.ndarray
    map: np.ndarray
    label: Optional[np.ndarray]
    tile_id: str
    origin: tuple[int, int] = (0, 0)

    def validate(self) -> "Sample":
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError(f"image must be HxWx3, got {self.image.shape}")
        if self.map.shape != self.image.shape:
            raise ValueError(
                f"map shape {self.map.shape} != image shape {self.image.shape}"
            )
        h, w = self.image.shape[:2]
        if h % 16 or w % 16:
            raise ValueError(f"tile size {h}x{w} not divisible by 16")
        if self.label is not None:
            if self.label.shape != (h, w):
                raise ValueError(
                    f"label shape {self.label.shape} != tile shape {(h, w)}"
                )
            bad = np.setdiff1d(np.unique(self.label), [0, 1])
            if bad.size:
                raise ValueError(f"label values outside {{0,1}}: {bad}")
        return self

    @property
    def size(self) -> tuple[int, int]:
        return self.image.shape[0], self.image.shape[1]


@dataclass
class RoadCenterlineSet:
    """Road centerlines as (class, [(x, y), ...]) polylines in pixel coords."""

    polylines: list[tuple[str, list[tuple[float, float]]]]
    scene_size: tuple[int, int]

    def validate(self) -> "RoadCenterlineSet":
        h, w = self.scene_size
        for cls, pts in self.polylines:
            if cls not in ROAD_CLASSES:
                raise ValueError(f"unknown road class {cls!r}")
            if len(pts) < 2:
                raise ValueError("polyline needs at least 2 vertices")
            for x, y in pts:
                if not (0 <= x < w and 0 <= y < h):
                    raise ValueError(f"vertex ({x}, {y}) outside {w}x{h} scene")
        return self


@dataclass
class MapPalette:
    """Colors used when rendering the simulated historical map."""

    background_rgb: tuple[int, int, int] = (242, 243, 240)
    road_fill_rgb: tuple[int, int, int] = (255, 255, 255)
    road_casing_rgb: tuple[int, int, int] = (180, 180, 180)

    def validate(self) -> "MapPalette":
        if tuple(self.road_fill_rgb) == tuple(self.background_rgb):
            raise ValueError("road fill color must differ from background")
        return self


@dataclass
class DatasetSplit:
    """Labeled/unlabeled partition of training tiles.

    Unlabeled samples keep their label arrays for evaluation only; the
    training loss path must never read them.
    """

    labeled: list[Sample]
    unlabeled: list[Sample]
    lab_ratio: float
    seed: int = 0

    def validate(self) -> "DatasetSplit":
        ids_l = {s.tile_id for s in self.labeled}
        ids_u = {s.tile_id for s in self.unlabeled}
        if ids_l & ids_u:
            raise ValueError(f"tiles in both pools: {sorted(ids_l & ids_u)}")
        n = len(self.labeled) + len(self.unlabeled)
        if n and abs(len(self.labeled) - self.lab_ratio * n) > 1.0:
            raise ValueError("labeled count more than one tile away from lab_ratio")
        return self
