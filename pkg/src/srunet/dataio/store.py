"""On-disk dataset layout.

    <root>/images/<tile_id>.png   RGB, 8-bit
    <root>/maps/<tile_id>.png     RGB, 8-bit
    <root>/labels/<tile_id>.png   grayscale {0, 255}
    <root>/index.json             tile ids plus their train/val assignment

Labels are stored as {0, 255} and normalized to {0, 1} on load.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .types import Sample

INDEX_NAME = "index.json"


def save_dataset(root, samples: list[Sample], assignment: dict[str, str], meta=None):
    """Write tiles and the index. `assignment` maps tile_id -> split name."""
    root = Path(root)
    for sub in ("images", "maps", "labels"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for s in samples:
        s.validate()
        Image.fromarray(s.image).save(root / "images" / f"{s.tile_id}.png")
        Image.fromarray(s.map).save(root / "maps" / f"{s.tile_id}.png")
        if s.label is not None:
            Image.fromarray((s.label * 255).astype(np.uint8)).save(
                root / "labels" / f"{s.tile_id}.png"
            )
    index = {
        "tiles": [
            {"tile_id": s.tile_id, "split": assignment.get(s.tile_id, "train")}
            for s in samples
        ],
        "meta": meta or {},
    }
    (root / INDEX_NAME).write_text(json.dumps(index, indent=2))


def load_index(root) -> dict:
    path = Path(root) / INDEX_NAME
    if not path.is_file():
        raise FileNotFoundError(f"no {INDEX_NAME} under {root}")
    return json.loads(path.read_text())


def load_sample(root, tile_id: str) -> Sample:
    root = Path(root)
    image = np.array(Image.open(root / "images" / f"{tile_id}.png").convert("RGB"))
    map_ = np.array(Image.open(root / "maps" / f"{tile_id}.png").convert("RGB"))
    label_path = root / "labels" / f"{tile_id}.png"
    label = None
    if label_path.is_file():
        raw = np.array(Image.open(label_path).convert("L"))
        label = (raw > 127).astype(np.uint8)
    return Sample(image=image, map=map_, label=label, tile_id=tile_id).validate()


def load_dataset(root, split: str | None = None) -> list[Sample]:
    """Load all tiles, optionally filtered to one split assignment."""
    index = load_index(root)
    samples = []
    for entry in index["tiles"]:
        if split is not None and entry["split"] != split:
            continue
        samples.append(load_sample(root, entry["tile_id"]))
    return samples
