"""Space-utilisation metrics: convex hull area, smallest enclosing circle, position heatmaps."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from pedflock.ingest import EnvironmentGeometry, points_in_polygon

MM2_PER_M2 = 1e6


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> List[Tuple[float, float]]:
    """Andrew's monotone chain; counter-clockwise, collinear points dropped."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return pts
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def polygon_area(vertices) -> float:
    """Shoelace area of a simple polygon, in the square of the input unit."""
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def convex_hull_area(points) -> float:
    """Hull area in m^2 for points given in mm; fewer than 3 non-collinear points give 0."""
    return polygon_area(convex_hull(points)) / MM2_PER_M2


# -- smallest enclosing circle ----------------------------------------------

_EPS = 1e-12


def _contains(c, p) -> bool:
    return math.hypot(p[0] - c[0], p[1] - c[1]) <= c[2] * (1 + _EPS) + _EPS


def _diameter(a, b):
    cx, cy = (a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0
    return cx, cy, max(math.hypot(cx - a[0], cy - a[1]), math.hypot(cx - b[0], cy - b[1]))


def _circumcircle(a, b, c):
    # Work relative to the bounding-box centre to limit cancellation.
    ox = (min(a[0], b[0], c[0]) + max(a[0], b[0], c[0])) / 2.0
    oy = (min(a[1], b[1], c[1]) + max(a[1], b[1], c[1])) / 2.0
    ax, ay = a[0] - ox, a[1] - oy
    bx, by = b[0] - ox, b[1] - oy
    cx, cy = c[0] - ox, c[1] - oy
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if d == 0.0:
        return None
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    x = ox + (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    y = oy + (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    r = max(math.hypot(x - p[0], y - p[1]) for p in (a, b, c))
    return x, y, r


def _circle_two(points, p, q):
    circ = _diameter(p, q)
    left = right = None
    for r in points:
        if _contains(circ, r):
            continue
        cross = _cross(p, q, r)
        c = _circumcircle(p, q, r)
        if c is None:
            continue
        side = _cross(p, q, (c[0], c[1]))
        if cross > 0 and (left is None or side > _cross(p, q, left[:2])):
            left = c
        elif cross < 0 and (right is None or side < _cross(p, q, right[:2])):
            right = c
    if left is None and right is None:
        return circ
    if left is None:
        return right
    if right is None:
        return left
    return left if left[2] <= right[2] else right


def _circle_one(points, p):
    c = (p[0], p[1], 0.0)
    for i, q in enumerate(points):
        if not _contains(c, q):
            c = _diameter(p, q) if c[2] == 0.0 else _circle_two(points[: i + 1], p, q)
    return c


def smallest_enclosing_circle(points, seed: int = 0) -> Tuple[Tuple[float, float], float]:
    """Welzl-style incremental minimum enclosing circle over a seeded shuffle.

    Returns ``((cx, cy), radius)`` in the input unit.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if not pts:
        raise ValueError("need at least one point")
    random.Random(seed).shuffle(pts)
    c = None
    for i, p in enumerate(pts):
        if c is None or not _contains(c, p):
            c = _circle_one(pts[: i + 1], p)
    # final radius: exact max distance to the chosen centre
    r = max(math.hypot(p[0] - c[0], p[1] - c[1]) for p in pts)
    return (c[0], c[1]), r


# -- heatmap ----------------------------------------------------------------


@dataclass(frozen=True)
class HeatmapGrid:
    cell_mm: float
    origin: Tuple[float, float]
    counts: np.ndarray  # shape (nx, ny), indexed [cell_x, cell_y]

    @property
    def log_density(self) -> np.ndarray:
        """log10(count) where count >= 1, NaN elsewhere."""
        out = np.full(self.counts.shape, np.nan)
        nz = self.counts > 0
        out[nz] = np.log10(self.counts[nz])
        return out

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def cells(self):
        """(cell_x, cell_y, count, log10) for occupied cells, x-major order."""
        ix, iy = np.nonzero(self.counts)
        for x, y in zip(ix, iy):
            c = int(self.counts[x, y])
            yield int(x), int(y), c, math.log10(c)


def accumulate_heatmap(points, geometry: EnvironmentGeometry, cell_mm: float = 500.0,
                       grid: Optional[HeatmapGrid] = None) -> HeatmapGrid:
    """Count in-boundary points per square cell anchored at the boundary bbox minimum.

    Passing ``grid`` adds to an existing grid (a new grid is returned).
    """
    if not cell_mm > 0:
        raise ValueError("cell_mm must be positive")
    xmin, ymin, xmax, ymax = geometry.bbox
    nx = max(1, int(math.ceil((xmax - xmin) / cell_mm)))
    ny = max(1, int(math.ceil((ymax - ymin) / cell_mm)))
    counts = np.zeros((nx, ny), dtype=np.int64) if grid is None else grid.counts.copy()
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts):
        inside = points_in_polygon(pts[:, 0], pts[:, 1], geometry.vertices)
        pts = pts[inside]
        ix = np.clip(np.floor((pts[:, 0] - xmin) / cell_mm).astype(int), 0, nx - 1)
        iy = np.clip(np.floor((pts[:, 1] - ymin) / cell_mm).astype(int), 0, ny - 1)
        np.add.at(counts, (ix, iy), 1)
    return HeatmapGrid(float(cell_mm), (xmin, ymin), counts)


# -- per-subject footprint --------------------------------------------------


@dataclass(frozen=True)
class SpatialFootprint:
    subject: str
    bin_index: int
    n_points: int
    hull_area_m2: float
    sec_center_mm: Tuple[float, float]
    sec_radius_mm: float


def footprint(subject: str, bin_index: int, points, seed: int = 0) -> SpatialFootprint:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    center, radius = smallest_enclosing_circle(pts, seed)
    return SpatialFootprint(subject, bin_index, len(pts), convex_hull_area(pts), center, radius)
