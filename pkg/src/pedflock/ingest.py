"""
Readers for tracking CSVs, group annotation files and environment geometry.

Tracking rows carry seven numeric columns::

    time, person_id, x_mm, y_mm, speed_mm_s, motion_angle_rad, facing_angle_rad

Time may be given either as integer epoch milliseconds or as epoch seconds
with a millisecond fraction (the ATC export format); both are stored as
integer milliseconds.
"""

from __future__ import annotations

import io
import json
import logging
import os
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from pedflock.angles import wrap

log = logging.getLogger(__name__)

# A file whose times are all below this (1e11 ms is March 1973) and carry
# fractional parts is read as epoch seconds.
_SECONDS_CUTOFF = 1e11


class InputError(Exception):
    """Raised for inputs that cannot be used at all (as opposed to bad rows)."""


@dataclass(frozen=True)
class TrajectoryPoint:
    t_ms: int
    x_mm: float
    y_mm: float
    speed_mm_s: float
    motion_angle_rad: float
    facing_angle_rad: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One pedestrian's samples, stored column-wise and sorted by time.

    Columns are read-only numpy arrays; ``points`` materialises the
    row view when needed.
    """

    pid: int
    t_ms: np.ndarray
    x_mm: np.ndarray
    y_mm: np.ndarray
    speed_mm_s: np.ndarray
    motion_angle_rad: np.ndarray
    facing_angle_rad: np.ndarray

    def __post_init__(self):
        n = len(self.t_ms)
        if n == 0:
            raise ValueError(f"trajectory {self.pid} is empty")
        for name in ("t_ms", "x_mm", "y_mm", "speed_mm_s", "motion_angle_rad", "facing_angle_rad"):
            arr = getattr(self, name)
            if len(arr) != n:
                raise ValueError(f"column {name} has length {len(arr)}, expected {n}")
            arr.flags.writeable = False
        if n > 1 and np.any(np.diff(self.t_ms) <= 0):
            raise ValueError(f"trajectory {self.pid} timestamps are not strictly increasing")

    @classmethod
    def from_columns(cls, pid, t_ms, x, y, speed, motion, facing) -> "Trajectory":
        return cls(
            int(pid),
            np.asarray(t_ms, dtype=np.int64).copy(),
            np.asarray(x, dtype=float).copy(),
            np.asarray(y, dtype=float).copy(),
            np.asarray(speed, dtype=float).copy(),
            wrap(motion),
            wrap(facing),
        )

    @classmethod
    def from_points(cls, pid: int, points: Iterable[TrajectoryPoint]) -> "Trajectory":
        pts = sorted(points, key=lambda p: p.t_ms)
        return cls.from_columns(
            pid,
            [p.t_ms for p in pts],
            [p.x_mm for p in pts],
            [p.y_mm for p in pts],
            [p.speed_mm_s for p in pts],
            [p.motion_angle_rad for p in pts],
            [p.facing_angle_rad for p in pts],
        )

    def __len__(self):
        return len(self.t_ms)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.pid == other.pid and all(
            np.array_equal(getattr(self, c), getattr(other, c)) for c in _COLUMNS
        )

    @property
    def xy(self) -> np.ndarray:
        return np.column_stack([self.x_mm, self.y_mm])

    @property
    def points(self) -> List[TrajectoryPoint]:
        return [
            TrajectoryPoint(int(t), float(x), float(y), float(s), float(m), float(f))
            for t, x, y, s, m, f in zip(
                self.t_ms, self.x_mm, self.y_mm, self.speed_mm_s,
                self.motion_angle_rad, self.facing_angle_rad,
            )
        ]

    def subset(self, mask) -> Optional["Trajectory"]:
        """Trajectory restricted to ``mask`` (boolean or index array); None if empty."""
        idx = mask if isinstance(mask, slice) else np.asarray(mask)
        cols = [getattr(self, c)[idx] for c in _COLUMNS]
        if len(cols[0]) == 0:
            return None
        return Trajectory(self.pid, *[np.array(c) for c in cols])


_COLUMNS = ("t_ms", "x_mm", "y_mm", "speed_mm_s", "motion_angle_rad", "facing_angle_rad")


@dataclass
class ParseStats:
    rows: int = 0
    records: int = 0
    malformed: int = 0
    duplicates: int = 0
    header_skipped: bool = False


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        try:
            return open(source, "r", encoding="utf-8", newline=""), True
        except OSError as exc:
            raise InputError(f"cannot read {source}: {exc}") from exc
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8")), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def _read_all(source) -> str:
    fh, owned = _open_text(source)
    try:
        return fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"unreadable tracking stream: {exc}") from exc
    finally:
        if owned:
            fh.close()


def _is_numeric(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _parse_rows(lines: List[str], stats: ParseStats) -> np.ndarray:
    """Slow path: per-row parsing with malformed-row accounting."""
    out = []
    for line in lines:
        parts = line.split(",")
        if len(parts) != 7:
            stats.malformed += 1
            continue
        try:
            out.append([float(p) for p in parts])
        except ValueError:
            stats.malformed += 1
    return np.array(out, dtype=float).reshape(-1, 7)


def parse_tracking_csv(source) -> Tuple[Dict[int, Trajectory], ParseStats]:
    """Parse a tracking CSV into trajectories keyed by pedestrian id.

    Rows with the wrong field count, non-numeric or non-finite fields,
    non-integer ids or negative speed are skipped and counted. Repeated
    timestamps for one pedestrian keep the first row in file order.
    """
    text = _read_all(source)
    stats = ParseStats()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines and not all(_is_numeric(tok) for tok in lines[0].split(",")):
        lines = lines[1:]
        stats.header_skipped = True
    stats.rows = len(lines)

    data = None
    if lines:
        try:
            data = np.loadtxt(lines, delimiter=",", dtype=float, ndmin=2)
            if data.shape[1] != 7:
                data = None
        except ValueError:
            data = None
    if data is None:
        data = _parse_rows(lines, stats)

    ok = np.all(np.isfinite(data), axis=1)
    ok &= data[:, 1] == np.round(data[:, 1])
    ok &= data[:, 4] >= 0
    stats.malformed += int((~ok).sum())
    data = data[ok]

    t = data[:, 0]
    seconds = len(t) > 0 and bool(np.all(np.abs(t) < _SECONDS_CUTOFF)) and bool(np.any(t != np.round(t)))
    t_ms = np.round(t * 1000.0 if seconds else t).astype(np.int64)
    pid = data[:, 1].astype(np.int64)

    order = np.lexsort((t_ms, pid))  # stable: file order breaks ties
    pid, t_ms, data = pid[order], t_ms[order], data[order]
    if len(pid):
        dup = np.zeros(len(pid), dtype=bool)
        dup[1:] = (pid[1:] == pid[:-1]) & (t_ms[1:] == t_ms[:-1])
        stats.duplicates = int(dup.sum())
        keep = ~dup
        pid, t_ms, data = pid[keep], t_ms[keep], data[keep]
    stats.records = len(pid)

    trajectories: Dict[int, Trajectory] = {}
    if len(pid):
        starts = np.flatnonzero(np.r_[True, pid[1:] != pid[:-1]])
        ends = np.r_[starts[1:], len(pid)]
        motion = wrap(data[:, 5])
        facing = wrap(data[:, 6])
        for s, e in zip(starts, ends):
            p = int(pid[s])
            trajectories[p] = Trajectory(
                p, t_ms[s:e], data[s:e, 2], data[s:e, 3], data[s:e, 4],
                motion[s:e], facing[s:e],
            )
    if stats.malformed:
        log.warning("skipped %d malformed tracking rows", stats.malformed)
    return trajectories, stats


def write_tracking_csv(trajectories: Dict[int, Trajectory], fh) -> None:
    """Serialize trajectories in the tracking-CSV column order (time in ms)."""
    for pid in sorted(trajectories):
        tr = trajectories[pid]
        for t, x, y, s, m, f in zip(tr.t_ms, tr.x_mm, tr.y_mm, tr.speed_mm_s,
                                    tr.motion_angle_rad, tr.facing_angle_rad):
            fh.write(f"{int(t)},{pid},{float(x)!r},{float(y)!r},{float(s)!r},{float(m)!r},{float(f)!r}\n")


# ---------------------------------------------------------------------------
# Group annotations


@dataclass(frozen=True)
class GroupAnnotation:
    pid: int
    group_size: int
    partner_ids: Tuple[int, ...]

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if len(self.partner_ids) != self.group_size - 1:
            raise ValueError("partner count must equal group_size - 1")
        if self.pid in self.partner_ids:
            raise ValueError("pedestrian listed as its own partner")


def parse_group_annotations(source) -> List[GroupAnnotation]:
    """Parse a space-separated group file: ``pid size partner...`` per row."""
    text = _read_all(source)
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            values = [int(tok) for tok in tokens]
        except ValueError:
            log.warning("group file line %d: non-integer token, skipped", lineno)
            continue
        if len(values) < 2 or len(values) != values[1] + 1:
            log.warning("group file line %d: expected group_size+1 tokens, skipped", lineno)
            continue
        try:
            out.append(GroupAnnotation(values[0], values[1], tuple(values[2:])))
        except ValueError as exc:
            log.warning("group file line %d: %s, skipped", lineno, exc)
    return out


def annotation_pair_set(annotations: Iterable[GroupAnnotation]) -> set:
    """Unordered ground-truth pairs as ``(low, high)`` tuples."""
    pairs = set()
    for ann in annotations:
        for other in ann.partner_ids:
            pairs.add((min(ann.pid, other), max(ann.pid, other)))
    return pairs


def annotation_asymmetries(annotations: Iterable[GroupAnnotation]) -> List[Tuple[int, int]]:
    """Pairs ``(a, b)`` where a lists b but b has no row listing a."""
    listed = {}
    for ann in annotations:
        listed.setdefault(ann.pid, set()).update(ann.partner_ids)
    missing = []
    for a, partners in sorted(listed.items()):
        for b in sorted(partners):
            if a not in listed.get(b, ()):
                missing.append((a, b))
    return missing


# ---------------------------------------------------------------------------
# Environment geometry


@dataclass(frozen=True)
class Pillar:
    center: Tuple[float, float]
    radius: float


@dataclass(frozen=True)
class Spot:
    label: str
    a: Tuple[float, float]
    b: Tuple[float, float]


@dataclass(frozen=True)
class EnvironmentGeometry:
    boundary: Tuple[Tuple[float, float], ...]
    pillars: Tuple[Pillar, ...] = ()
    spots: Tuple[Spot, ...] = ()

    def __post_init__(self):
        if len(self.boundary) < 3:
            raise InputError("boundary needs at least 3 vertices")
        for p in self.pillars:
            if not p.radius > 0:
                raise InputError(f"pillar at {p.center} has non-positive radius {p.radius}")
        crossing = _self_intersection(np.asarray(self.boundary, dtype=float))
        if crossing is not None:
            i, j = crossing
            raise InputError(f"boundary is not simple: edge {i} intersects edge {j}")

    @property
    def vertices(self) -> np.ndarray:
        return np.asarray(self.boundary, dtype=float)

    @property
    def area_mm2(self) -> float:
        v = self.vertices
        x, y = v[:, 0], v[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    @property
    def bbox(self) -> Tuple[float, float, float, float]:
        v = self.vertices
        return float(v[:, 0].min()), float(v[:, 1].min()), float(v[:, 0].max()), float(v[:, 1].max())

    def to_json(self) -> dict:
        return {
            "schema": "pedflock-geometry/1",
            "boundary": [list(p) for p in self.boundary],
            "pillars": [{"center": list(p.center), "radius": p.radius} for p in self.pillars],
            "spots": [{"label": s.label, "a": list(s.a), "b": list(s.b)} for s in self.spots],
        }


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p) -> bool:
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1, d2 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    d3, d4 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and d1 != 0 and d2 != 0 and ((d3 > 0) != (d4 > 0)) and d3 != 0 and d4 != 0:
        return True
    return (
        (d1 == 0 and _on_segment(q1, q2, p1))
        or (d2 == 0 and _on_segment(q1, q2, p2))
        or (d3 == 0 and _on_segment(p1, p2, q1))
        or (d4 == 0 and _on_segment(p1, p2, q2))
    )


def _self_intersection(v: np.ndarray) -> Optional[Tuple[int, int]]:
    n = len(v)
    edges = [(tuple(v[i]), tuple(v[(i + 1) % n])) for i in range(n)]
    for i in range(n):
        if edges[i][0] == edges[i][1]:
            return i, i
        for j in range(i + 1, n):
            adjacent = j == i + 1 or (i == 0 and j == n - 1)
            if adjacent:
                # neighbours share a vertex; they only clash if they fold back onto each other
                a, b = edges[i]
                c, d = edges[j]
                shared, p_other, q_other = (b, a, d) if j == i + 1 else (a, b, c)
                if _orient(shared, p_other, q_other) == 0 and (
                    _on_segment(shared, p_other, q_other) or _on_segment(shared, q_other, p_other)
                ):
                    return i, j
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return i, j
    return None


def parse_environment(source) -> EnvironmentGeometry:
    """Load geometry JSON (``boundary``, ``pillars``, ``spots``; all in mm)."""
    if isinstance(source, dict):
        doc = source
    else:
        try:
            doc = json.loads(_read_all(source))
        except json.JSONDecodeError as exc:
            raise InputError(f"geometry file is not valid JSON: {exc}") from exc
    try:
        boundary = tuple((float(x), float(y)) for x, y in doc["boundary"])
        pillars = tuple(
            Pillar((float(p["center"][0]), float(p["center"][1])), float(p["radius"]))
            for p in doc.get("pillars", [])
        )
        spots = tuple(
            Spot(str(s.get("label", "")), (float(s["a"][0]), float(s["a"][1])), (float(s["b"][0]), float(s["b"][1])))
            for s in doc.get("spots", [])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"geometry file does not match schema: {exc!r}") from exc
    return EnvironmentGeometry(boundary, pillars, spots)


def points_in_polygon(x, y, vertices) -> np.ndarray:
    """Vectorised even-odd test with points on an edge counted as inside."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v = np.asarray(vertices, dtype=float)
    inside = np.zeros(x.shape, dtype=bool)
    on_edge = np.zeros(x.shape, dtype=bool)
    n = len(v)
    for i in range(n):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % n]
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        on_edge |= (
            (cross == 0)
            & (x >= min(x1, x2)) & (x <= max(x1, x2))
            & (y >= min(y1, y2)) & (y <= max(y1, y2))
        )
        straddles = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= straddles & (x < x_at)
    return inside | on_edge


@dataclass
class FilterStats:
    points_removed: int = 0
    trajectories_dropped: int = 0


def filter_to_boundary(
    trajectories: Dict[int, Trajectory], geometry: EnvironmentGeometry
) -> Tuple[Dict[int, Trajectory], FilterStats]:
    """Drop samples outside the boundary; trajectories left empty disappear."""
    stats = FilterStats()
    out = {}
    verts = geometry.vertices
    for pid, tr in trajectories.items():
        mask = points_in_polygon(tr.x_mm, tr.y_mm, verts)
        kept = int(mask.sum())
        stats.points_removed += len(tr) - kept
        if kept == len(tr):
            out[pid] = tr
        elif kept == 0:
            stats.trajectories_dropped += 1
        else:
            out[pid] = tr.subset(mask)
    return out, stats


# ---------------------------------------------------------------------------
# Dataset summary


@dataclass(frozen=True)
class DatasetSummary:
    agents: int
    total_records: int
    min_records: int
    max_records: int
    mean_records: float
    mean_interval_s: Optional[float]
    duration_h: float

    def to_json(self) -> dict:
        return {"schema": "pedflock-summary/1", **self.__dict__}


def summarize_dataset(trajectories: Dict[int, Trajectory]) -> DatasetSummary:
    """Agent/record counts, mean sampling interval and covered duration.

    The mean interval averages every consecutive-sample gap of every agent;
    the duration spans the earliest to the latest sample of the dataset.
    """
    if not trajectories:
        raise ValueError("cannot summarize an empty dataset")
    counts = np.array([len(tr) for tr in trajectories.values()])
    gaps = sum(int(tr.t_ms[-1] - tr.t_ms[0]) for tr in trajectories.values())
    n_gaps = int((counts - 1).sum())
    t0 = min(int(tr.t_ms[0]) for tr in trajectories.values())
    t1 = max(int(tr.t_ms[-1]) for tr in trajectories.values())
    return DatasetSummary(
        agents=len(trajectories),
        total_records=int(counts.sum()),
        min_records=int(counts.min()),
        max_records=int(counts.max()),
        mean_records=float(counts.mean()),
        mean_interval_s=gaps / n_gaps / 1000.0 if n_gaps else None,
        duration_h=(t1 - t0) / 3_600_000.0,
    )
