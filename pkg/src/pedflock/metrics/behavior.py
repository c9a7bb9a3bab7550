"""
Behavioural metrics: straightness, clearance, encounter episodes between
singles and flocks, speed/heading change around an encounter, per-minute
timelines, the group-size regression and ECDFs.

Windows inside one bin start at different instants, so all of them are
placed on a shared grid of ``1 / rate_hz`` slots starting at the earliest
window start; a sample occupies the slot nearest to its timestamp.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from pedflock.angles import abs_angle_diff, circular_mean
from pedflock.binning import TimeBin, TrajectoryWindow
from pedflock.flock import FlockAssignment

EVENT_TYPES = ("S-S", "S-G", "G-G")

DEFAULT_D_ENC_MM = 1500.0
DEFAULT_HYSTERESIS_MM = 250.0
DEFAULT_WINDOW = 15


def trajectory_straightness(xy) -> float:
    """Endpoint displacement over path length, in [0, 1]; a stationary track counts as 1.

    Paths whose length exceeds the displacement by no more than 1e-9
    relative are reported as exactly 1.
    """
    p = np.asarray(xy, dtype=float).reshape(-1, 2)
    if len(p) < 2:
        raise ValueError("need at least two samples")
    path = float(np.hypot(*np.diff(p, axis=0).T).sum())
    if path == 0.0:
        return 1.0
    disp = math.hypot(p[-1, 0] - p[0, 0], p[-1, 1] - p[0, 1])
    if path - disp <= 1e-9 * path:
        return 1.0
    return min(1.0, disp / path)


def is_stationary(xy) -> bool:
    p = np.asarray(xy, dtype=float).reshape(-1, 2)
    return bool(np.all(p == p[0]))


class BinGrid:
    """Positions of every window in a bin on the shared slot grid."""

    def __init__(self, time_bin: TimeBin):
        windows = sorted(time_bin.windows, key=lambda w: w.pid)
        self.bin_index = time_bin.bin_index
        self.pids = [w.pid for w in windows]
        self.col = {pid: k for k, pid in enumerate(self.pids)}
        self.windows: Dict[int, TrajectoryWindow] = {w.pid: w for w in windows}
        if not windows:
            self.t0, self.period = float(time_bin.t_start_ms), 1.0
            self.xy = np.full((0, 0, 2), np.nan)
            self.sample_index = np.full((0, 0), -1)
            return
        self.period = 1000.0 / windows[0].rate_hz
        self.t0 = float(min(int(w.t_ms[0]) for w in windows))
        slots = {w.pid: np.rint((w.t_ms - self.t0) / self.period).astype(int) for w in windows}
        n_slots = max(int(s.max()) for s in slots.values()) + 1
        self.xy = np.full((n_slots, len(windows), 2), np.nan)
        self.sample_index = np.full((n_slots, len(windows)), -1, dtype=int)
        for pid, s in slots.items():
            k = self.col[pid]
            self.xy[s, k] = self.windows[pid].xy
            self.sample_index[s, k] = np.arange(len(s))

    @property
    def n_slots(self) -> int:
        return self.xy.shape[0]

    def slot_of(self, t_ms: float) -> int:
        return int(round((t_ms - self.t0) / self.period))

    def time_of(self, slot: int) -> int:
        return int(round(self.t0 + slot * self.period))

    def present(self, slot: int) -> np.ndarray:
        return ~np.isnan(self.xy[slot, :, 0])


def clearance_radius(pid: int, t_ms: float, time_bin: TimeBin | BinGrid) -> Optional[float]:
    """Distance to the nearest other pedestrian present in the same slot, or None."""
    grid = time_bin if isinstance(time_bin, BinGrid) else BinGrid(time_bin)
    slot = grid.slot_of(t_ms)
    if pid not in grid.col or not 0 <= slot < grid.n_slots:
        return None
    k = grid.col[pid]
    here = grid.xy[slot]
    if np.isnan(here[k, 0]):
        return None
    d = np.hypot(here[:, 0] - here[k, 0], here[:, 1] - here[k, 1])
    d[k] = np.nan
    if np.all(np.isnan(d)):
        return None
    return float(np.nanmin(d))


def clearance_series(grid: BinGrid) -> np.ndarray:
    """(slots, agents) nearest-neighbour distance; NaN where absent or alone."""
    xy = grid.xy
    diff = xy[:, :, None, :] - xy[:, None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    n = xy.shape[1]
    d[:, np.arange(n), np.arange(n)] = np.nan
    out = np.full(d.shape[:2], np.nan)
    has = ~np.all(np.isnan(d), axis=2)
    out[has] = np.nanmin(d[has], axis=1)
    return out


@dataclass(frozen=True)
class Subject:
    sid: str
    kind: str  # "S" or "G"
    members: Tuple[int, ...]

    @property
    def key(self) -> int:
        return min(self.members)


def subjects_of(assignment: FlockAssignment) -> List[Subject]:
    subs = [Subject(f"p{pid}", "S", (pid,)) for pid in assignment.singles]
    subs += [Subject(assignment.flock_id(k), "G", tuple(g)) for k, g in enumerate(assignment.groups)]
    return sorted(subs, key=lambda s: s.key)


@dataclass
class ParticipantChange:
    dv_mm_s: Optional[float]
    dtheta_rad: Optional[float]


@dataclass
class EncounterEvent:
    bin_index: int
    type: str
    subject_a: str
    subject_b: str
    members_a: Tuple[int, ...]
    members_b: Tuple[int, ...]
    t_start_ms: int
    t_end_ms: int
    t_min_ms: int
    min_distance_mm: float
    location_mm: Tuple[float, float]
    closest_pair: Tuple[int, int]
    change_a: ParticipantChange = field(default_factory=lambda: ParticipantChange(None, None))
    change_b: ParticipantChange = field(default_factory=lambda: ParticipantChange(None, None))
    group_size: Optional[int] = None
    slot_min: int = 0


def _event_type(a: Subject, b: Subject) -> str:
    kinds = {a.kind, b.kind}
    if kinds == {"S"}:
        return "S-S"
    if kinds == {"G"}:
        return "G-G"
    return "S-G"


def _subject_distance(grid: BinGrid, a: Subject, b: Subject):
    """Per-slot min member-pair distance plus the (slot) index of the closest pair."""
    ia = [grid.col[p] for p in a.members]
    ib = [grid.col[p] for p in b.members]
    pa = grid.xy[:, ia, :]
    pb = grid.xy[:, ib, :]
    diff = pa[:, :, None, :] - pb[:, None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1]).reshape(grid.n_slots, -1)
    dist = np.full(grid.n_slots, np.nan)
    arg = np.full(grid.n_slots, -1)
    ok = ~np.all(np.isnan(d), axis=1)
    if ok.any():
        arg[ok] = np.nanargmin(d[ok], axis=1)
        dist[ok] = d[ok, arg[ok]]
    return dist, arg, len(ib)


def _episodes(dist: np.ndarray, d_enc: float, hysteresis: float) -> List[Tuple[int, int]]:
    """Slot ranges [start, end] of proximity episodes.

    Opens below ``d_enc``; closes above ``d_enc + hysteresis`` or where the
    two subjects stop being observed together.
    """
    out = []
    start = None
    for k, d in enumerate(dist):
        if start is None:
            if d < d_enc:
                start = k
        elif np.isnan(d):
            out.append((start, k - 1))
            start = None
        elif d > d_enc + hysteresis:
            out.append((start, k - 1))
            start = None
    if start is not None:
        out.append((start, len(dist) - 1))
    return out


def _member_change(window: TrajectoryWindow, i: int, w: int):
    pre = slice(max(0, i - w), i)
    post = slice(i, i + w)
    if i < 1 or i >= len(window):
        return None
    dv = float(np.mean(window.speed[post]) - np.mean(window.speed[pre]))
    h_pre = circular_mean(window.motion[pre])
    h_post = circular_mean(window.motion[post])
    return dv, h_pre, h_post


def participant_change(grid: BinGrid, subject: Subject, slot: int, w: int = DEFAULT_WINDOW) -> ParticipantChange:
    """Speed change (post minus pre, mm/s) and heading change (rad) around ``slot``.

    The pre-window is the ``w`` samples before the slot, the post-window
    the ``w`` samples starting at it. A group averages its members' speed
    changes; its heading change compares the circular means of the
    members' pre and post headings.
    """
    dvs, pres, posts = [], [], []
    for pid in subject.members:
        i = grid.sample_index[slot, grid.col[pid]]
        if i < 0:
            continue
        r = _member_change(grid.windows[pid], int(i), w)
        if r is None:
            continue
        dv, h_pre, h_post = r
        dvs.append(dv)
        if h_pre is not None and h_post is not None:
            pres.append(h_pre)
            posts.append(h_post)
    dv = float(np.mean(dvs)) if dvs else None
    dtheta = None
    if pres:
        pre, post = circular_mean(pres), circular_mean(posts)
        if pre is not None and post is not None:
            dtheta = abs_angle_diff(pre, post)
    return ParticipantChange(dv, dtheta)


def speed_change(event: EncounterEvent, participant: str, grid: BinGrid, w: int = DEFAULT_WINDOW) -> Optional[float]:
    return participant_change(grid, _participant(event, participant), event.slot_min, w).dv_mm_s


def heading_change(event: EncounterEvent, participant: str, grid: BinGrid, w: int = DEFAULT_WINDOW) -> Optional[float]:
    return participant_change(grid, _participant(event, participant), event.slot_min, w).dtheta_rad


def _participant(event: EncounterEvent, sid: str) -> Subject:
    if sid == event.subject_a:
        return Subject(sid, "G" if len(event.members_a) > 1 else "S", event.members_a)
    if sid == event.subject_b:
        return Subject(sid, "G" if len(event.members_b) > 1 else "S", event.members_b)
    raise KeyError(sid)


def detect_encounters(
    time_bin: TimeBin | BinGrid,
    assignment: FlockAssignment,
    d_enc: float = DEFAULT_D_ENC_MM,
    hysteresis: float = DEFAULT_HYSTERESIS_MM,
    window: int = DEFAULT_WINDOW,
) -> List[EncounterEvent]:
    """Proximity episodes between every pair of subjects (singles and whole flocks).

    Events are ordered by subject pair (smaller member pid first), then time.
    """
    if not d_enc > 0:
        raise ValueError("d_enc must be positive")
    grid = time_bin if isinstance(time_bin, BinGrid) else BinGrid(time_bin)
    subjects = [s for s in subjects_of(assignment) if all(p in grid.col for p in s.members)]
    events = []
    for i, a in enumerate(subjects):
        for b in subjects[i + 1:]:
            dist, arg, nb = _subject_distance(grid, a, b)
            for s0, s1 in _episodes(dist, d_enc, hysteresis):
                seg = dist[s0: s1 + 1]
                k = s0 + int(np.nanargmin(seg))
                ma, mb = a.members[arg[k] // nb], b.members[arg[k] % nb]
                pa = grid.xy[k, grid.col[ma]]
                pb = grid.xy[k, grid.col[mb]]
                etype = _event_type(a, b)
                group_size = None
                if etype == "S-G":
                    group_size = len(a.members) if a.kind == "G" else len(b.members)
                events.append(EncounterEvent(
                    bin_index=grid.bin_index, type=etype,
                    subject_a=a.sid, subject_b=b.sid,
                    members_a=a.members, members_b=b.members,
                    t_start_ms=grid.time_of(s0), t_end_ms=grid.time_of(s1),
                    t_min_ms=grid.time_of(k), min_distance_mm=float(dist[k]),
                    location_mm=(float((pa[0] + pb[0]) / 2), float((pa[1] + pb[1]) / 2)),
                    closest_pair=(ma, mb),
                    change_a=participant_change(grid, a, k, window),
                    change_b=participant_change(grid, b, k, window),
                    group_size=group_size, slot_min=k,
                ))
    return events


def interaction_timeline(events: Sequence[EncounterEvent], t_origin_ms: int,
                         n_minutes: Optional[int] = None, minute_ms: int = 60_000) -> List[Tuple[int, str, int]]:
    """(minute, type, count) rows for every minute and type, zero-filled."""
    counts = Counter(((e.t_min_ms - t_origin_ms) // minute_ms, e.type) for e in events)
    last = max((m for m, _ in counts), default=-1)
    n = max(last + 1, n_minutes or 0)
    return [(m, t, counts.get((m, t), 0)) for m in range(n) for t in EVENT_TYPES]


def groupsize_distance_regression(events: Sequence[EncounterEvent]) -> dict:
    """OLS of S-G minimum distance on group size, with Pearson r.

    Values that cannot be determined are None.
    """
    pts = [(e.group_size, e.min_distance_mm) for e in events if e.type == "S-G" and e.group_size]
    out = {"n": len(pts), "slope": None, "intercept": None, "r": None}
    if len(pts) < 2:
        return out
    x = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts], dtype=float)
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0.0:
        return out
    sxy = float(np.sum((x - x.mean()) * (y - y.mean())))
    syy = float(np.sum((y - y.mean()) ** 2))
    slope = sxy / sxx
    out["slope"] = slope
    out["intercept"] = float(y.mean() - slope * x.mean())
    out["r"] = sxy / math.sqrt(sxx * syy) if syy > 0 else None
    return out


def ecdf(values) -> List[Tuple[float, float]]:
    """Right-continuous ECDF steps: each distinct value with the fraction <= it."""
    v = np.sort(np.asarray(values, dtype=float))
    if len(v) == 0:
        raise ValueError("ECDF of an empty sample")
    uniq, idx = np.unique(v, return_index=True)
    last = np.r_[idx[1:], len(v)]
    return [(float(u), int(k) / len(v)) for u, k in zip(uniq, last)]
