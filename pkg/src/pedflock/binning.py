"""Uniform resampling, start-time binning and minimum-length filtering."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional

import numpy as np

from pedflock.angles import wrap
from pedflock.ingest import Trajectory

DEFAULT_RATE_HZ = 3.0
DEFAULT_INTERVAL_MS = 60_000


def _interp_angle(t_new, t, a):
    """Interpolate angles along the shorter arc between neighbouring samples."""
    idx = np.clip(np.searchsorted(t, t_new, side="right") - 1, 0, len(t) - 2)
    t0, t1 = t[idx], t[idx + 1]
    frac = (t_new - t0) / (t1 - t0)
    delta = wrap(a[idx + 1] - a[idx])
    return wrap(a[idx] + frac * delta)


def resample_uniform(trajectory: Trajectory, rate_hz: float = DEFAULT_RATE_HZ) -> Optional[Trajectory]:
    """Resample onto ``t0 + k / rate_hz`` without extrapolating past the last sample.

    Returns None when fewer than two resampled points fit in the span.
    """
    if rate_hz <= 0:
        raise ValueError("rate_hz must be positive")
    if len(trajectory) < 2:
        return None
    t = trajectory.t_ms.astype(float)
    period = 1000.0 / rate_hz
    span = t[-1] - t[0]
    n = int(math.floor(span / period + 1e-9)) + 1
    if n < 2:
        return None
    t_new = t[0] + np.arange(n) * period
    t_new[-1] = min(t_new[-1], t[-1])
    return Trajectory(
        trajectory.pid,
        np.round(t_new).astype(np.int64),
        np.interp(t_new, t, trajectory.x_mm),
        np.interp(t_new, t, trajectory.y_mm),
        np.interp(t_new, t, trajectory.speed_mm_s),
        _interp_angle(t_new, t, trajectory.motion_angle_rad),
        _interp_angle(t_new, t, trajectory.facing_angle_rad),
    )


@dataclass(frozen=True, eq=False)
class TrajectoryWindow:
    """A resampled trajectory (or its leading segment) placed in a time bin."""

    track: Trajectory
    bin_index: int
    rate_hz: float

    @property
    def pid(self) -> int:
        return self.track.pid

    def __len__(self):
        return len(self.track)

    @property
    def t_ms(self):
        return self.track.t_ms

    @property
    def xy(self) -> np.ndarray:
        return self.track.xy

    @property
    def speed(self):
        return self.track.speed_mm_s

    @property
    def motion(self):
        return self.track.motion_angle_rad

    @property
    def facing(self):
        return self.track.facing_angle_rad

    def head(self, n: int) -> "TrajectoryWindow":
        return replace(self, track=self.track.subset(slice(0, n)))

    def __eq__(self, other):
        if not isinstance(other, TrajectoryWindow):
            return NotImplemented
        return self.bin_index == other.bin_index and self.rate_hz == other.rate_hz and self.track == other.track


@dataclass(eq=False)
class TimeBin:
    bin_index: int
    t_start_ms: int
    t_end_ms: int
    windows: List[TrajectoryWindow] = field(default_factory=list)

    @property
    def pids(self) -> List[int]:
        return [w.pid for w in self.windows]

    def __eq__(self, other):
        if not isinstance(other, TimeBin):
            return NotImplemented
        return (self.bin_index, self.t_start_ms, self.t_end_ms) == (
            other.bin_index, other.t_start_ms, other.t_end_ms
        ) and self.windows == other.windows


def assign_bins(
    trajectories: Iterable[Trajectory],
    interval_ms: int = DEFAULT_INTERVAL_MS,
    rate_hz: float = DEFAULT_RATE_HZ,
    origin_ms: Optional[int] = None,
) -> List[TimeBin]:
    """Place each trajectory in the bin containing its first timestamp.

    The origin defaults to the earliest start time; every bin from index 0
    up to the last occupied one is returned, empty or not. Windows inside a
    bin are ordered by pid.
    """
    if interval_ms <= 0:
        raise ValueError("interval_ms must be positive")
    trajectories = list(trajectories)
    if not trajectories:
        return []
    if origin_ms is None:
        origin_ms = min(int(tr.t_ms[0]) for tr in trajectories)
    index = {}
    for tr in trajectories:
        index.setdefault((int(tr.t_ms[0]) - origin_ms) // interval_ms, []).append(tr)
    lo, hi = min(min(index), 0), max(index)
    bins = []
    for b in range(lo, hi + 1):
        members = sorted(index.get(b, []), key=lambda tr: tr.pid)
        start = origin_ms + b * interval_ms
        bins.append(TimeBin(b, start, start + interval_ms, [TrajectoryWindow(tr, b, rate_hz) for tr in members]))
    return bins


def filter_min_length(time_bin: TimeBin, seq_len: int) -> TimeBin:
    """Keep windows with at least ``seq_len`` samples, truncated to the first ``seq_len``."""
    kept = [w if len(w) == seq_len else w.head(seq_len) for w in time_bin.windows if len(w) >= seq_len]
    return TimeBin(time_bin.bin_index, time_bin.t_start_ms, time_bin.t_end_ms, kept)


def prepare_bins(
    trajectories: Dict[int, Trajectory],
    interval_ms: int = DEFAULT_INTERVAL_MS,
    seq_len: int = 60,
    rate_hz: float = DEFAULT_RATE_HZ,
) -> List[TimeBin]:
    """Resample, bin and length-filter in one call.

    Bins are keyed on the original start times so that a trajectory too
    short to resample still does not shift the bin origin.
    """
    if not trajectories:
        return []
    origin = min(int(tr.t_ms[0]) for tr in trajectories.values())
    resampled = []
    for pid in sorted(trajectories):
        r = resample_uniform(trajectories[pid], rate_hz)
        if r is not None:
            resampled.append(r)
    bins = assign_bins(resampled, interval_ms, rate_hz, origin_ms=origin)
    return [filter_min_length(b, seq_len) for b in bins]


@dataclass(frozen=True)
class BinStatsReport:
    total_agents: int
    bins: int
    nonempty_bins: int
    min_agents: Optional[int]
    max_agents: Optional[int]
    mean_agents: Optional[float]

    def to_json(self) -> dict:
        return {"schema": "pedflock-binstats/1", **self.__dict__}


def bin_stats(bins: List[TimeBin]) -> BinStatsReport:
    """Agent counts per bin; min/max/mean are taken over non-empty bins only."""
    counts = [len(b.windows) for b in bins]
    nonempty = [c for c in counts if c > 0]
    if not nonempty:
        return BinStatsReport(0, len(bins), 0, None, None, None)
    return BinStatsReport(
        total_agents=sum(nonempty),
        bins=len(bins),
        nonempty_bins=len(nonempty),
        min_agents=min(nonempty),
        max_agents=max(nonempty),
        mean_agents=sum(nonempty) / len(nonempty),
    )
