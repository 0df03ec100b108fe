"""Mask to vector: despeckle, thin to centerlines, trace polylines, and
classify changes against the historical road mask."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

_EIGHT = np.ones((3, 3), dtype=int)
# 8-neighbor offsets, clockwise from north
_OFFSETS = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]

VALID_STATUS = ("unchanged", "added", "removed")


@dataclass
class Polyline:
    id: str
    vertices: list[tuple[float, float]]  # (x, y) pixel coordinates
    status: str | None = None

    @property
    def length(self) -> float:
        pts = np.asarray(self.vertices, dtype=float)
        return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


@dataclass
class RoadVectorSet:
    polylines: list[Polyline]
    mask_size: tuple[int, int]

    def validate(self) -> "RoadVectorSet":
        h, w = self.mask_size
        for pl in self.polylines:
            if len(pl.vertices) < 2:
                raise ValueError(f"polyline {pl.id} has fewer than 2 vertices")
            if pl.status is not None and pl.status not in VALID_STATUS:
                raise ValueError(f"polyline {pl.id} has status {pl.status!r}")
            prev = None
            for x, y in pl.vertices:
                if not (0 <= x < w and 0 <= y < h):
                    raise ValueError(
                        f"polyline {pl.id} vertex ({x},{y}) outside {w}x{h}")
                if prev == (x, y):
                    raise ValueError(
                        f"polyline {pl.id} has duplicate consecutive vertices")
                prev = (x, y)
        return self


def despeckle(mask: np.ndarray, min_area_px: int = 64) -> np.ndarray:
    """Drop 8-connected components smaller than min_area_px."""
    mask = np.asarray(mask).astype(bool)
    labels, n = ndimage.label(mask, structure=_EIGHT)
    if n == 0:
        return mask.astype(np.uint8)
    areas = np.bincount(labels.ravel())
    keep = np.zeros(n + 1, dtype=bool)
    keep[1:] = areas[1:] >= min_area_px
    return keep[labels].astype(np.uint8)


def _neighbor_views(padded: np.ndarray):
    """The eight neighbor planes of a 1-padded binary array, clockwise from
    north, each aligned with the unpadded array."""
    return [padded[1 + dr:padded.shape[0] - 1 + dr,
                   1 + dc:padded.shape[1] - 1 + dc]
            for dr, dc in _OFFSETS]


def skeletonize(mask: np.ndarray) -> np.ndarray:
    """Iterative thinning to a 1-px-wide skeleton (Zhang–Suen rules)."""
    img = np.asarray(mask).astype(np.uint8).copy()
    while True:
        changed = False
        for phase in (0, 1):
            padded = np.pad(img, 1)
            p2, p3, p4, p5, p6, p7, p8, p9 = _neighbor_views(padded)
            ring = [p2, p3, p4, p5, p6, p7, p8, p9, p2]
            b = sum(ring[:8])
            a = sum((ring[i] == 0) & (ring[i + 1] == 1) for i in range(8))
            if phase == 0:
                c3 = (p2 * p4 * p6) == 0
                c4 = (p4 * p6 * p8) == 0
            else:
                c3 = (p2 * p4 * p8) == 0
                c4 = (p2 * p6 * p8) == 0
            remove = (img == 1) & (b >= 2) & (b <= 6) & (a == 1) & c3 & c4
            if remove.any():
                img[remove] = 0
                changed = True
        if not changed:
            return img


def _douglas_peucker(points: list[tuple[float, float]],
                     tol: float) -> list[tuple[float, float]]:
    if len(points) < 3:
        return list(points)
    pts = np.asarray(points, dtype=float)
    keep = np.zeros(len(pts), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(pts) - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        seg = pts[j] - pts[i]
        chord = np.linalg.norm(seg)
        rel = pts[i + 1:j] - pts[i]
        if chord < 1e-12:
            dist = np.linalg.norm(rel, axis=1)
        else:
            t = np.clip(rel @ seg / (chord * chord), 0.0, 1.0)
            dist = np.linalg.norm(rel - t[:, None] * seg, axis=1)
        k = int(np.argmax(dist))
        if dist[k] > tol:
            split = i + 1 + k
            keep[split] = True
            stack.append((i, split))
            stack.append((split, j))
    return [tuple(p) for p in pts[keep]]


def _skeleton_graph(skeleton: np.ndarray):
    pixels = {(int(r), int(c)) for r, c in zip(*np.nonzero(skeleton))}
    adjacency = {}
    for p in pixels:
        adjacency[p] = [q for q in
                        ((p[0] + dr, p[1] + dc) for dr, dc in _OFFSETS)
                        if q in pixels]
    return pixels, adjacency


def _extend_dangle(verts: list[tuple[float, float]], mask: np.ndarray,
                   at_start: bool, step: float = 0.5) -> list[tuple[float, float]]:
    """Push a dangling endpoint outward along its segment direction while it
    stays on mask pixels.  Compensates the end retraction (about half the
    road width) that morphological thinning applies to every free end."""
    h, w = mask.shape
    if at_start:
        end, inner = np.asarray(verts[0], float), np.asarray(verts[1], float)
    else:
        end, inner = np.asarray(verts[-1], float), np.asarray(verts[-2], float)
    direction = end - inner
    norm = float(np.linalg.norm(direction))
    if norm < 1e-9:
        return verts
    direction /= norm
    best = end
    pos = end.copy()
    for _ in range(int(max(h, w) / step)):
        pos = pos + direction * step
        if not (0.0 <= pos[0] <= w - 1.0 and 0.0 <= pos[1] <= h - 1.0):
            break
        if not mask[int(round(pos[1])), int(round(pos[0]))]:
            break
        best = pos.copy()
    moved = (float(best[0]), float(best[1]))
    if at_start:
        return [moved] + verts[1:]
    return verts[:-1] + [moved]


def trace_polylines(skeleton: np.ndarray, simplify_tol: float = 1.5,
                    id_prefix: str = "p",
                    extend_into: np.ndarray | None = None) -> RoadVectorSet:
    """Walk the skeleton graph into simplified polylines.

    Nodes sit at endpoints (degree 1) and junctions (degree >= 3); every
    edge between nodes becomes one polyline, plus one per closed loop.
    Vertices are Douglas–Peucker simplified.  When `extend_into` (the mask
    the skeleton came from) is given, degree-1 ends are extended into it to
    undo thinning's end retraction; junction ends are left alone.
    """
    skeleton = np.asarray(skeleton)
    pixels, adj = _skeleton_graph(skeleton)
    nodes = {p for p in pixels if len(adj[p]) != 2}
    visited: set[tuple[tuple[int, int], tuple[int, int]]] = set()
    chains: list[list[tuple[int, int]]] = []

    def walk(start, first):
        chain = [start, first]
        visited.add((start, first))
        visited.add((first, start))
        prev, cur = start, first
        while cur not in nodes:
            nxt = [q for q in adj[cur] if q != prev]
            if not nxt:
                break
            step = nxt[0]
            visited.add((cur, step))
            visited.add((step, cur))
            prev, cur = cur, step
            chain.append(cur)
        return chain

    for node in sorted(nodes):
        for nb in sorted(adj[node]):
            if (node, nb) not in visited:
                chains.append(walk(node, nb))

    # closed loops: every pixel has degree 2 and no incident edge visited
    for p in sorted(pixels - nodes):
        if any((p, q) in visited for q in adj[p]):
            continue
        if not adj[p]:
            continue  # isolated pixel, nothing to trace
        chain = [p]
        prev, cur = p, sorted(adj[p])[0]
        visited.add((p, cur))
        visited.add((cur, p))
        while cur != p:
            chain.append(cur)
            nxt = [q for q in adj[cur] if q != prev]
            if not nxt:
                break
            step = nxt[0]
            visited.add((cur, step))
            visited.add((step, cur))
            prev, cur = cur, step
        else:
            chain.append(p)
        chains.append(chain)

    mask = None
    if extend_into is not None:
        mask = np.asarray(extend_into).astype(bool)
        if mask.shape != skeleton.shape:
            raise ValueError("extend_into must match the skeleton size")

    polylines = []
    for i, chain in enumerate(chains):
        verts = [(float(c), float(r)) for r, c in chain]
        verts = _douglas_peucker(verts, simplify_tol)
        if len(verts) < 2:
            continue
        if mask is not None and chain[0] != chain[-1]:
            if len(adj[chain[0]]) == 1:
                verts = _extend_dangle(verts, mask, at_start=True)
            if len(adj[chain[-1]]) == 1:
                verts = _extend_dangle(verts, mask, at_start=False)
        polylines.append(Polyline(id=f"{id_prefix}{i}", vertices=verts))
    return RoadVectorSet(polylines=polylines,
                         mask_size=tuple(skeleton.shape)).validate()


def resample_polyline(vertices, spacing: float = 1.0) -> np.ndarray:
    """Points along the polyline at roughly `spacing` px intervals."""
    pts = np.asarray(vertices, dtype=float)
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        seg_len = float(np.linalg.norm(b - a))
        n = max(1, int(math.ceil(seg_len / spacing)))
        for k in range(1, n + 1):
            out.append(a + (b - a) * (k / n))
    return np.asarray(out)


def _points_fraction(points: np.ndarray, covered: np.ndarray) -> float:
    h, w = covered.shape
    cols = np.clip(np.rint(points[:, 0]).astype(int), 0, w - 1)
    rows = np.clip(np.rint(points[:, 1]).astype(int), 0, h - 1)
    return float(covered[rows, cols].mean())


def diff_against_history(new_mask: np.ndarray, historical_mask: np.ndarray,
                         buffer_px: float = 8.0, unchanged_frac: float = 0.8,
                         removed_frac: float = 0.2,
                         simplify_tol: float = 1.5) -> RoadVectorSet:
    """Label traced roads as unchanged / added / removed.

    New-mask polylines are unchanged when at least `unchanged_frac` of their
    (densely resampled) points lie within buffer_px of historical road
    pixels, otherwise added.  Historical centerlines whose coverage by the
    new mask falls below `removed_frac` are emitted as removed.
    """
    new_mask = np.asarray(new_mask).astype(bool)
    historical_mask = np.asarray(historical_mask).astype(bool)
    if new_mask.shape != historical_mask.shape:
        raise ValueError(
            f"mask sizes differ: {new_mask.shape} vs {historical_mask.shape}")

    new_vecs = trace_polylines(skeletonize(new_mask.astype(np.uint8)),
                               simplify_tol, id_prefix="n",
                               extend_into=new_mask)
    hist_vecs = trace_polylines(skeletonize(historical_mask.astype(np.uint8)),
                                simplify_tol, id_prefix="h",
                                extend_into=historical_mask)

    if historical_mask.any():
        near_hist = ndimage.distance_transform_edt(~historical_mask) <= buffer_px
    else:
        near_hist = np.zeros_like(historical_mask)

    out = []
    for pl in new_vecs.polylines:
        frac = _points_fraction(resample_polyline(pl.vertices), near_hist)
        status = "unchanged" if frac >= unchanged_frac else "added"
        out.append(Polyline(id=pl.id, vertices=pl.vertices, status=status))
    for pl in hist_vecs.polylines:
        frac = _points_fraction(resample_polyline(pl.vertices), new_mask)
        if frac < removed_frac:
            out.append(Polyline(id=pl.id, vertices=pl.vertices,
                                status="removed"))
    return RoadVectorSet(polylines=out,
                         mask_size=tuple(new_mask.shape)).validate()


def rasterize_polylines(polylines: list[Polyline], size: tuple[int, int],
                        radius: float = 0.5) -> np.ndarray:
    """Stamp polylines back into a binary raster with a round pen."""
    from .dataio.geometry import _stamp_segment

    mask = np.zeros(size, dtype=bool)
    for pl in polylines:
        verts = pl.vertices
        for (x0, y0), (x1, y1) in zip(verts[:-1], verts[1:]):
            _stamp_segment(mask, x0, y0, x1, y1, radius)
    return mask.astype(np.uint8)


def to_geojson(vset: RoadVectorSet) -> dict:
    features = []
    for pl in vset.polylines:
        features.append({
            "type": "Feature",
            "geometry": {
                "type": "LineString",
                "coordinates": [[float(x), float(y)] for x, y in pl.vertices],
            },
            "properties": {"id": pl.id, "status": pl.status,
                           "length_px": pl.length},
        })
    return {"type": "FeatureCollection", "features": features}


def change_summary(vset: RoadVectorSet) -> dict:
    added = [pl for pl in vset.polylines if pl.status == "added"]
    removed = [pl for pl in vset.polylines if pl.status == "removed"]
    unchanged = [pl for pl in vset.polylines if pl.status == "unchanged"]
    return {
        "n_unchanged": len(unchanged),
        "n_added": len(added),
        "n_removed": len(removed),
        "added_length_px": sum(pl.length for pl in added),
        "removed_length_px": sum(pl.length for pl in removed),
    }
