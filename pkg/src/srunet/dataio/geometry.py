"""Rasterize road centerlines into binary masks by Euclidean buffering."""

from __future__ import annotations

import numpy as np

from .types import PRIMARY_BUFFER_PX, SECONDARY_BUFFER_PX, RoadCenterlineSet


def _stamp_segment(mask, x0, y0, x1, y1, radius):
    """Set mask pixels within `radius` of segment (x0,y0)-(x1,y1).

    Works on the segment's bounding box only; distances are exact
    point-to-segment distances evaluated at integer pixel centers.
    """
    h, w = mask.shape
    r = int(np.ceil(radius)) + 1
    cx0 = max(int(np.floor(min(x0, x1))) - r, 0)
    cx1 = min(int(np.ceil(max(x0, x1))) + r, w - 1)
    cy0 = max(int(np.floor(min(y0, y1))) - r, 0)
    cy1 = min(int(np.ceil(max(y0, y1))) + r, h - 1)
    if cx0 > cx1 or cy0 > cy1:
        return
    ys, xs = np.mgrid[cy0 : cy1 + 1, cx0 : cx1 + 1]
    dx, dy = x1 - x0, y1 - y0
    seg_len2 = dx * dx + dy * dy
    if seg_len2 == 0.0:
        dist = np.hypot(xs - x0, ys - y0)
    else:
        t = ((xs - x0) * dx + (ys - y0) * dy) / seg_len2
        t = np.clip(t, 0.0, 1.0)
        dist = np.hypot(xs - (x0 + t * dx), ys - (y0 + t * dy))
    mask[cy0 : cy1 + 1, cx0 : cx1 + 1] |= dist <= radius


def buffer_centerlines(centerlines: RoadCenterlineSet) -> np.ndarray:
    """Binary HxW mask: 1 where distance to a primary centerline is <= 7 px
    or to a secondary centerline is <= 4 px. Empty input gives an all-zero
    mask."""
    centerlines.validate()
    h, w = centerlines.scene_size
    mask = np.zeros((h, w), dtype=bool)
    for cls, pts in centerlines.polylines:
        radius = PRIMARY_BUFFER_PX if cls == "primary" else SECONDARY_BUFFER_PX
        for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
            _stamp_segment(mask, float(x0), float(y0), float(x1), float(y1), radius)
    return mask.astype(np.uint8)
