"""Deterministic labeled/unlabeled partition of a training set."""

from __future__ import annotations

import numpy as np

from .types import DatasetSplit, Sample


def split_dataset(samples: list[Sample], lab_ratio: float, seed: int = 0) -> DatasetSplit:
    """Shuffle tiles by seed and take lab_ratio of them as the labeled pool.

    All inputs must carry labels; unlabeled pool members keep theirs for
    evaluation but the trainer treats them as unlabeled. At least one tile
    is always labeled.
    """
    if not 0.0 < lab_ratio <= 1.0:
        raise ValueError(f"lab_ratio must be in (0,1], got {lab_ratio}")
    if len(samples) < 2:
        raise ValueError("need at least 2 samples to split")
    for s in samples:
        if s.label is None:
            raise ValueError(f"sample {s.tile_id} has no label")

    order = np.random.default_rng(seed).permutation(len(samples))
    n_labeled = max(1, round(lab_ratio * len(samples)))
    labeled = [samples[i] for i in order[:n_labeled]]
    unlabeled = [samples[i] for i in order[n_labeled:]]
    return DatasetSplit(
        labeled=labeled, unlabeled=unlabeled, lab_ratio=lab_ratio, seed=seed
    ).validate()
