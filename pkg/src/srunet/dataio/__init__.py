"""Data types, synthetic scenes, historical-map simulation, and augmentation."""

from .augment import apply_flips, augment_pair, derive_seed, flip_decisions
from .geometry import buffer_centerlines
from .mapsim import erase_road_fraction, render_map, simulate_historical_map
from .split import split_dataset
from .store import load_dataset, load_index, load_sample, save_dataset
from .synth import SceneConfig, generate_synthetic_scene
from .types import (
    PRIMARY_BUFFER_PX,
    ROAD_CLASSES,
    SECONDARY_BUFFER_PX,
    DatasetSplit,
    MapPalette,
    RoadCenterlineSet,
    Sample,
)

__all__ = [
    "PRIMARY_BUFFER_PX",
    "SECONDARY_BUFFER_PX",
    "ROAD_CLASSES",
    "Sample",
    "RoadCenterlineSet",
    "MapPalette",
    "DatasetSplit",
    "SceneConfig",
    "generate_synthetic_scene",
    "buffer_centerlines",
    "erase_road_fraction",
    "render_map",
    "simulate_historical_map",
    "split_dataset",
    "augment_pair",
    "apply_flips",
    "flip_decisions",
    "derive_seed",
    "save_dataset",
    "load_dataset",
    "load_index",
    "load_sample",
]
