"""Simulate a degraded historical road map from a ground-truth label mask.

Erasure removes structured geometry (whole connected road components, then
short arcs of the remaining ones) rather than scattered pixels, so the
missing roads look like real map lag: roads built after the map was made.
"""

from __future__ import annotations

from collections import deque

import numpy as np
from scipy import ndimage

from .types import MapPalette

ARC_PIXELS = 64
ERASE_TOL = 0.02

_EIGHT = np.ones((3, 3), dtype=int)


def _arc_chunks(comp_pixels, arc_px, rng):
    """Split a component's pixel list into contiguous chunks of ~arc_px pixels.

    Pixels are ordered by BFS over 8-connectivity from a random start, so each
    chunk is a compact stretch of the road rather than a random scatter.
    """
    coords = {tuple(p) for p in comp_pixels}
    start = tuple(comp_pixels[rng.integers(len(comp_pixels))])
    order = []
    seen = {start}
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        order.append((r, c))
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                nb = (r + dr, c + dc)
                if nb in coords and nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
    return [order[i : i + arc_px] for i in range(0, len(order), arc_px)]


def erase_road_fraction(label: np.ndarray, masked_ratio: float, seed: int) -> np.ndarray:
    """Return a copy of `label` with ~masked_ratio of its road pixels erased.

    Whole components are dropped while they fit under target + 2%; the last
    component is then trimmed arc by arc. Stops once the erased fraction is
    within 2% of target or the next whole chunk would overshoot. For masks
    with at least ~1000 road pixels the landing window is guaranteed by
    shrinking the arc below 64 px when 4% of the road is smaller than that.
    """
    if not 0.0 <= masked_ratio <= 1.0:
        raise ValueError(f"masked_ratio must be in [0,1], got {masked_ratio}")
    bad = np.setdiff1d(np.unique(label), [0, 1])
    if bad.size:
        raise ValueError(f"label must be binary, found values {bad}")

    out = label.astype(np.uint8).copy()
    total = int(out.sum())
    if total == 0 or masked_ratio == 0.0:
        return out
    if masked_ratio == 1.0:
        out[:] = 0
        return out

    rng = np.random.default_rng(seed)
    target = masked_ratio * total
    tol = ERASE_TOL * total
    arc_px = min(ARC_PIXELS, max(1, int(2 * tol)))

    labels, n_comp = ndimage.label(out, structure=_EIGHT)
    comp_ids = rng.permutation(np.arange(1, n_comp + 1))
    sizes = ndimage.sum_labels(out, labels, comp_ids).astype(int)

    erased = 0
    leftovers = []
    for comp_id, size in zip(comp_ids, sizes):
        if erased >= target - tol:
            break
        if erased + size <= target + tol:
            out[labels == comp_id] = 0
            erased += size
        else:
            leftovers.append(comp_id)

    for comp_id in leftovers:
        if erased >= target - tol:
            break
        pixels = np.argwhere(labels == comp_id)
        for chunk in _arc_chunks(pixels, arc_px, rng):
            if erased >= target - tol:
                break
            if erased + len(chunk) > target + tol:
                break
            rows, cols = zip(*chunk)
            out[list(rows), list(cols)] = 0
            erased += len(chunk)

    return out


def render_map(road_mask: np.ndarray, palette: MapPalette) -> np.ndarray:
    """Render a binary road mask into an RGB web-map style raster."""
    palette.validate()
    h, w = road_mask.shape
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = palette.background_rgb
    # one-pixel casing ring around roads, then the fill on top
    casing = ndimage.binary_dilation(road_mask.astype(bool), structure=_EIGHT)
    img[casing & ~road_mask.astype(bool)] = palette.road_casing_rgb
    img[road_mask.astype(bool)] = palette.road_fill_rgb
    return img


def simulate_historical_map(
    label: np.ndarray,
    masked_ratio: float,
    palette: MapPalette | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Erase part of the road label and render the rest as a map raster."""
    palette = palette or MapPalette()
    kept = erase_road_fraction(label, masked_ratio, seed)
    return render_map(kept, palette)
