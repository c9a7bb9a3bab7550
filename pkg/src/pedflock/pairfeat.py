"""Six pairwise descriptors between two equal-length trajectory windows."""

from __future__ import annotations

import itertools
from dataclasses import astuple, dataclass, fields
from typing import Iterator, List, Tuple

import numba
import numpy as np

from pedflock.angles import abs_angle_diff, circular_mean
from pedflock.binning import TimeBin, TrajectoryWindow

# Recorded in model metadata so that scores are never mixed across conventions.
DTW_CONVENTION = "euclidean-symmetric1-unconstrained-unnormalized"
ANGLE_AGGREGATION = "circular-mean"


class FeatureError(ValueError):
    """A pair whose features cannot be computed (length mismatch, undefined heading)."""


@dataclass(frozen=True)
class PairFeatures:
    mean_inter_distance_mm: float
    start_time_diff_s: float
    mean_speed_diff_mm_s: float
    motion_angle_diff_rad: float
    facing_angle_diff_rad: float
    dtw_distance_mm: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)


FEATURE_NAMES = tuple(f.name for f in fields(PairFeatures))


def _check_lengths(wa: TrajectoryWindow, wb: TrajectoryWindow):
    if len(wa) != len(wb):
        raise FeatureError(f"window lengths differ: {len(wa)} vs {len(wb)}")


def mean_inter_distance(wa: TrajectoryWindow, wb: TrajectoryWindow) -> float:
    """Index-aligned mean Euclidean distance, in mm."""
    _check_lengths(wa, wb)
    d = np.hypot(wa.track.x_mm - wb.track.x_mm, wa.track.y_mm - wb.track.y_mm)
    return float(d.mean())


def start_time_diff(wa: TrajectoryWindow, wb: TrajectoryWindow) -> float:
    return abs(int(wa.t_ms[0]) - int(wb.t_ms[0])) / 1000.0


def mean_speed_diff(wa: TrajectoryWindow, wb: TrajectoryWindow) -> float:
    _check_lengths(wa, wb)
    return abs(float(np.mean(wa.speed)) - float(np.mean(wb.speed)))


def _heading_diff(a: np.ndarray, b: np.ndarray, what: str) -> float:
    ma, mb = circular_mean(a), circular_mean(b)
    if ma is None or mb is None:
        raise FeatureError(f"{what} angle has no defined mean direction")
    return abs_angle_diff(ma, mb)


def motion_angle_diff(wa: TrajectoryWindow, wb: TrajectoryWindow) -> float:
    _check_lengths(wa, wb)
    return _heading_diff(wa.motion, wb.motion, "motion")


def facing_angle_diff(wa: TrajectoryWindow, wb: TrajectoryWindow) -> float:
    _check_lengths(wa, wb)
    return _heading_diff(wa.facing, wb.facing, "facing")


@numba.njit(cache=True, nogil=True)
def _dtw_core(ax, ay, bx, by):
    n, m = ax.shape[0], bx.shape[0]
    prev = np.full(m + 1, np.inf)
    cur = np.full(m + 1, np.inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur[0] = np.inf
        for j in range(1, m + 1):
            cost = np.sqrt((ax[i - 1] - bx[j - 1]) ** 2 + (ay[i - 1] - by[j - 1]) ** 2)
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = cost + best
        prev, cur = cur, prev
    return prev[m]


def dtw_xy(a: np.ndarray, b: np.ndarray) -> float:
    """DTW accumulated cost between two (n, 2) point sequences."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise FeatureError("DTW needs non-empty sequences")
    return float(_dtw_core(a[:, 0].copy(), a[:, 1].copy(), b[:, 0].copy(), b[:, 1].copy()))


def dtw_distance(wa: TrajectoryWindow, wb: TrajectoryWindow) -> float:
    """Classic DTW on 2-D positions: steps (1,0), (0,1), (1,1), no band, no normalisation.

    The table is filled with the lower-pid window as rows so the result
    is bit-identical under argument swap.
    """
    if wb.pid < wa.pid:
        wa, wb = wb, wa
    return dtw_xy(wa.xy, wb.xy)


def extract_pair_features(wa: TrajectoryWindow, wb: TrajectoryWindow) -> PairFeatures:
    if wb.pid < wa.pid:
        wa, wb = wb, wa
    return PairFeatures(
        mean_inter_distance(wa, wb),
        start_time_diff(wa, wb),
        mean_speed_diff(wa, wb),
        motion_angle_diff(wa, wb),
        facing_angle_diff(wa, wb),
        dtw_distance(wa, wb),
    )


@dataclass(frozen=True)
class PairRecord:
    bin_index: int
    pid_a: int
    pid_b: int
    features: PairFeatures


def bin_pairs(time_bin: TimeBin) -> Iterator[Tuple[TrajectoryWindow, TrajectoryWindow]]:
    """All unordered window pairs in a bin, in canonical (pid_a < pid_b) order."""
    windows = sorted(time_bin.windows, key=lambda w: w.pid)
    return itertools.combinations(windows, 2)


def features_for_bins(bins, skipped: List[Tuple[int, int, int, str]] = None) -> List[PairRecord]:
    """Features for every within-bin pair, ordered by bin then pid pair.

    Pairs whose features are undefined are left out; when ``skipped`` is
    given, ``(bin, pid_a, pid_b, reason)`` is appended to it for each.
    """
    out = []
    for b in bins:
        for wa, wb in bin_pairs(b):
            try:
                f = extract_pair_features(wa, wb)
            except FeatureError as exc:
                if skipped is not None:
                    skipped.append((b.bin_index, wa.pid, wb.pid, str(exc)))
                continue
            out.append(PairRecord(b.bin_index, wa.pid, wb.pid, f))
    return out
