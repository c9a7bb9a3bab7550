"""
Readers and writers for the intermediate CSV artifacts.

Every CSV starts with a comment line ``# pedflock:<kind>/<version>``,
optionally followed by ``key=value`` metadata, then a header row. Floats are
written with ``repr`` so that a round trip is exact.
"""

from __future__ import annotations

import csv
import json
import os
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from pedflock.binning import TimeBin, TrajectoryWindow
from pedflock.classifier import PairScore
from pedflock.flock import FlockAssignment
from pedflock.ingest import InputError, Trajectory
from pedflock.pairfeat import FEATURE_NAMES, PairFeatures, PairRecord

BINS_HEADER = ["bin_index", "pid", "sample", "t_ms", "x_mm", "y_mm",
               "speed_mm_s", "motion_angle_rad", "facing_angle_rad"]
FEATURES_HEADER = ["bin_index", "pid_a", "pid_b", *FEATURE_NAMES]
SCORES_HEADER = ["bin_index", "pid_a", "pid_b", "probability"]
ASSIGN_HEADER = ["bin_index", "pid", "label", "flock_id"]


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def schema_line(kind: str, version: int = 1, **meta) -> str:
    extra = "".join(f" {k}={fmt(v)}" for k, v in meta.items())
    return f"# pedflock:{kind}/{version}{extra}\n"


def write_csv(path, kind: str, header: Sequence[str], rows: Iterable[Sequence], **meta) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(schema_line(kind, **meta))
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
            n += 1
    return n


def write_json(path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_csv_meta(path, kind: str) -> Tuple[dict, str]:
    """Schema metadata and the header line, without reading the rows."""
    try:
        with open(path, encoding="utf-8") as fh:
            first, header = fh.readline().strip(), fh.readline().strip()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    prefix = f"# pedflock:{kind}/"
    if not first.startswith(prefix):
        raise InputError(f"{path}: expected a '{prefix}' schema line, got {first[:60]!r}")
    return dict(tok.split("=", 1) for tok in first.split()[2:] if "=" in tok), header


def read_csv(path, kind: str) -> Tuple[dict, List[dict]]:
    """Return (metadata, rows) after checking the schema comment."""
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    with fh:
        first = fh.readline().strip()
        prefix = f"# pedflock:{kind}/"
        if not first.startswith(prefix):
            raise InputError(f"{path}: expected a '{prefix}' schema line, got {first[:60]!r}")
        meta = dict(tok.split("=", 1) for tok in first.split()[2:] if "=" in tok)
        return meta, list(csv.DictReader(fh))


# -- bins -------------------------------------------------------------------


def write_bins(path, bins: Sequence[TimeBin], interval_ms: int, rate_hz: float, seq_len: int) -> int:
    origin = bins[0].t_start_ms - bins[0].bin_index * interval_ms if bins else 0
    first = bins[0].bin_index if bins else 0

    def rows():
        for b in bins:
            for w in sorted(b.windows, key=lambda w: w.pid):
                tr = w.track
                for k in range(len(tr)):
                    yield (b.bin_index, tr.pid, k, int(tr.t_ms[k]), tr.x_mm[k], tr.y_mm[k],
                           tr.speed_mm_s[k], tr.motion_angle_rad[k], tr.facing_angle_rad[k])

    return write_csv(path, "bins", BINS_HEADER, rows(), interval_ms=interval_ms, origin_ms=origin,
                     rate_hz=float(rate_hz), seq_len=seq_len, first_bin=first, n_bins=len(bins))


def read_bins(path) -> Tuple[List[TimeBin], dict]:
    meta, _ = read_csv_meta(path, "bins")
    interval = int(meta["interval_ms"])
    origin = int(meta["origin_ms"])
    rate = float(meta["rate_hz"])
    first, n_bins = int(meta.get("first_bin", 0)), int(meta["n_bins"])
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2, dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: malformed bins file: {exc}") from exc
    windows: Dict[int, List[TrajectoryWindow]] = {}
    if len(data):
        data = data[np.lexsort((data[:, 2], data[:, 1], data[:, 0]))]
        key = data[:, :2]
        starts = np.flatnonzero(np.r_[True, np.any(key[1:] != key[:-1], axis=1)])
        ends = np.r_[starts[1:], len(data)]
        for s, e in zip(starts, ends):
            b, pid = int(data[s, 0]), int(data[s, 1])
            seg = data[s:e]
            tr = Trajectory(pid, seg[:, 3].astype(np.int64), *(seg[:, c].copy() for c in range(4, 9)))
            windows.setdefault(b, []).append(TrajectoryWindow(tr, b, rate))
    bins = [
        TimeBin(b, origin + b * interval, origin + (b + 1) * interval, windows.get(b, []))
        for b in range(first, first + n_bins)
    ]
    params = {"interval_ms": interval, "origin_ms": origin, "rate_hz": rate, "seq_len": int(meta["seq_len"])}
    return bins, params


# -- features / scores / assignments ---------------------------------------


def write_features(path, records: Sequence[PairRecord], **meta) -> int:
    rows = ((r.bin_index, r.pid_a, r.pid_b, *r.features.as_array().tolist()) for r in records)
    return write_csv(path, "features", FEATURES_HEADER, rows, **meta)


def read_features(path) -> Tuple[List[PairRecord], dict]:
    meta, rows = read_csv(path, "features")
    return [
        PairRecord(int(r["bin_index"]), int(r["pid_a"]), int(r["pid_b"]),
                   PairFeatures(*(float(r[name]) for name in FEATURE_NAMES)))
        for r in rows
    ], meta


def write_scores(path, scores: Sequence[PairScore]) -> int:
    rows = ((s.bin_index, s.pid_a, s.pid_b, s.probability) for s in scores)
    return write_csv(path, "scores", SCORES_HEADER, rows)


def write_assignments(path, assignments: Sequence[FlockAssignment]) -> int:
    def rows():
        for a in assignments:
            flock_of = a.flock_of()
            for pid in sorted(a.members):
                if pid in flock_of:
                    yield a.bin_index, pid, "GROUP", a.flock_id(flock_of[pid])
                else:
                    yield a.bin_index, pid, "SINGLE", None
    return write_csv(path, "assignments", ASSIGN_HEADER, rows())


def read_assignments(path) -> List[FlockAssignment]:
    _, rows = read_csv(path, "assignments")
    per_bin: Dict[int, Tuple[Dict[str, List[int]], set]] = {}
    for r in rows:
        b = int(r["bin_index"])
        flocks, singles = per_bin.setdefault(b, ({}, set()))
        if r["label"] == "GROUP":
            flocks.setdefault(r["flock_id"], []).append(int(r["pid"]))
        elif r["label"] == "SINGLE":
            singles.add(int(r["pid"]))
        else:
            raise InputError(f"{path}: unknown label {r['label']!r}")
    out = []
    for b in sorted(per_bin):
        flocks, singles = per_bin[b]
        groups = sorted(tuple(sorted(m)) for m in flocks.values())
        out.append(FlockAssignment(b, groups, singles))
    return out


def ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)
