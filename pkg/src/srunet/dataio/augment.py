"""Paired augmentation: flips shared by image/map/label, photometrics on the
image only. The flip decisions are exposed separately so a training loop can
replay them on teacher pseudo-labels."""

from __future__ import annotations

import hashlib
from dataclasses import replace

import numpy as np
from scipy import ndimage

from .types import Sample


def derive_seed(*parts) -> int:
    """Stable child seed from arbitrary parts (unlike hash(), survives runs)."""
    key = ":".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2s(key, digest_size=8).digest(), "little")


def flip_decisions(seed: int) -> tuple[bool, bool]:
    """(hflip, vflip) drawn exactly as augment_pair draws them."""
    rng = np.random.default_rng(seed)
    return bool(rng.random() < 0.5), bool(rng.random() < 0.5)


def apply_flips(arr: np.ndarray, hflip: bool, vflip: bool) -> np.ndarray:
    """Flip an HxW or HxWxC array; hflip mirrors columns, vflip mirrors rows."""
    if hflip:
        arr = arr[:, ::-1]
    if vflip:
        arr = arr[::-1, :]
    return np.ascontiguousarray(arr)


def _color_jitter(img: np.ndarray, rng) -> np.ndarray:
    out = img.astype(np.float64)
    brightness = rng.uniform(0.75, 1.25)
    contrast = rng.uniform(0.75, 1.25)
    saturation = rng.uniform(0.75, 1.25)
    out = out * brightness
    mean = out.mean()
    out = (out - mean) * contrast + mean
    gray = out.mean(axis=2, keepdims=True)
    out = (out - gray) * saturation + gray
    return out


def augment_pair(sample: Sample, mode: str, seed: int) -> Sample:
    """Augment one tile; weak = flips only, strong adds blur and color jitter.

    Flips are applied identically to image, map, and label. Deterministic per
    seed: the flip bits are always the first two RNG draws.
    """
    if mode not in ("weak", "strong"):
        raise ValueError(f"mode must be weak or strong, got {mode!r}")
    sample.validate()
    rng = np.random.default_rng(seed)
    hflip, vflip = bool(rng.random() < 0.5), bool(rng.random() < 0.5)

    image = apply_flips(sample.image, hflip, vflip)
    map_ = apply_flips(sample.map, hflip, vflip)
    label = None if sample.label is None else apply_flips(sample.label, hflip, vflip)

    if mode == "strong":
        img = image.astype(np.float64)
        if rng.random() < 0.5:
            sigma = rng.uniform(0.2, 1.2)
            for ch in range(3):
                img[..., ch] = ndimage.gaussian_filter(img[..., ch], sigma)
        img = _color_jitter(img, rng)
        image = np.clip(img, 0, 255).astype(np.uint8)

    return replace(sample, image=image, map=map_, label=label)
