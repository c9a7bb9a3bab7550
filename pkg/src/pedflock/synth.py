"""Synthetic corridor scenarios with planted groups, used as test fixtures and demos."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

CORRIDOR_LENGTH_MM = 55_000.0
CORRIDOR_WIDTH_MM = 5_000.0
WALL_MARGIN_MM = 500.0


@dataclass(frozen=True)
class WalkerSpec:
    pid: int
    entry_s: float
    speed_mm_s: float
    direction: int  # +1 walks towards +x, -1 towards -x
    lateral_mm: float


@dataclass(frozen=True)
class GroupSpec:
    pids: Tuple[int, ...]
    entry_s: float
    speed_mm_s: float
    direction: int
    lateral_mm: float  # centre line of the formation
    offset_mm: float = 600.0  # lateral spacing between neighbours


@dataclass
class ScenarioSpec:
    singles: List[WalkerSpec] = field(default_factory=list)
    groups: List[GroupSpec] = field(default_factory=list)
    noise_mm: float = 50.0
    sample_hz: float = 10.0
    t0_ms: int = 1_368_000_000_000

    def all_pids(self) -> List[int]:
        return [w.pid for w in self.singles] + [p for g in self.groups for p in g.pids]


@dataclass
class Scenario:
    tracking_csv: str
    groups_txt: str
    geometry: dict
    annotation_pairs: set
    n_records: int


def _walk(pid, entry_s, speed, direction, lateral, spec: ScenarioSpec, rng) -> List[tuple]:
    length = CORRIDOR_LENGTH_MM - 2 * WALL_MARGIN_MM
    dt = 1.0 / spec.sample_hz
    n = int(math.floor(length / (speed * dt))) + 1
    k = np.arange(n)
    s = k * speed * dt
    x0 = WALL_MARGIN_MM if direction > 0 else CORRIDOR_LENGTH_MM - WALL_MARGIN_MM
    x = x0 + direction * s
    y = np.full(n, float(lateral))
    if spec.noise_mm > 0:
        x = x + rng.normal(0.0, spec.noise_mm, n)
        y = y + rng.normal(0.0, spec.noise_mm, n)
    heading = 0.0 if direction > 0 else math.pi
    t0 = spec.t0_ms + int(round(entry_s * 1000))
    t = t0 + np.rint(k * dt * 1000).astype(np.int64)
    return [(int(t[i]), pid, float(x[i]), float(y[i]), float(speed), heading, heading) for i in range(n)]


def generate_synthetic_scenario(spec: ScenarioSpec, seed: int = 0) -> Scenario:
    """Constant-velocity corridor walkers with Gaussian position noise.

    Group members share entry time, speed and direction and hold fixed
    lateral offsets around the group centre line. Returns the tracking CSV
    text (rows ordered by time, then pid), the matching group annotation
    text and a rectangular corridor geometry.
    """
    pids = spec.all_pids()
    if len(pids) != len(set(pids)):
        dup = sorted({p for p in pids if pids.count(p) > 1})
        raise ValueError(f"duplicate pids in scenario: {dup}")
    rng = np.random.default_rng(seed)
    rows: List[tuple] = []
    for w in spec.singles:
        rows += _walk(w.pid, w.entry_s, w.speed_mm_s, w.direction, w.lateral_mm, spec, rng)
    ann_lines = []
    pairs = set()
    for g in spec.groups:
        k = len(g.pids)
        for j, pid in enumerate(g.pids):
            lateral = g.lateral_mm + (j - (k - 1) / 2.0) * g.offset_mm
            rows += _walk(pid, g.entry_s, g.speed_mm_s, g.direction, lateral, spec, rng)
        for pid in g.pids:
            others = [p for p in g.pids if p != pid]
            ann_lines.append(" ".join(str(v) for v in (pid, k, *others)))
            pairs.update((min(pid, o), max(pid, o)) for o in others)
    rows.sort(key=lambda r: (r[0], r[1]))
    csv_text = "".join(
        f"{t},{pid},{x!r},{y!r},{v!r},{m!r},{f!r}\n" for t, pid, x, y, v, m, f in rows
    )
    return Scenario(csv_text, "\n".join(ann_lines) + ("\n" if ann_lines else ""),
                    corridor_geometry(), pairs, len(rows))


def corridor_geometry() -> dict:
    L, W = CORRIDOR_LENGTH_MM, CORRIDOR_WIDTH_MM
    return {
        "schema": "pedflock-geometry/1",
        "boundary": [[0.0, 0.0], [L, 0.0], [L, W], [0.0, W]],
        "pillars": [
            {"center": [18_000.0, 300.0], "radius": 250.0},
            {"center": [37_000.0, 300.0], "radius": 250.0},
        ],
        "spots": [
            {"label": "exit-west", "a": [0.0, 1000.0], "b": [0.0, 4000.0]},
            {"label": "exit-east", "a": [L, 1000.0], "b": [L, 4000.0]},
            {"label": "shop-north", "a": [25_000.0, W], "b": [30_000.0, W]},
        ],
    }


def default_scenario(seed: int = 0, n_pairs: int = 8, n_singles: int = 24,
                     offset_mm: float = 600.0, noise_mm: float = 50.0,
                     entry_spacing_s: float = 3.5) -> ScenarioSpec:
    """Pairs and singles entering on a jittered schedule, one subject per slot.

    Entry slots are ``entry_spacing_s`` apart so unrelated walkers never
    enter together; directions, speeds and lateral lanes are random.
    """
    rng = np.random.default_rng(seed)
    n_subjects = n_pairs + n_singles
    slots = rng.permutation(n_subjects)
    entries = slots * entry_spacing_s + rng.uniform(0.0, 0.5, n_subjects)
    speeds = rng.uniform(1000.0, 1600.0, n_subjects)
    dirs = rng.choice([-1, 1], n_subjects)
    lanes = rng.uniform(800.0, CORRIDOR_WIDTH_MM - 800.0, n_subjects)
    groups, singles = [], []
    pid = 1
    for i in range(n_subjects):
        entry = round(float(entries[i]), 3)
        if i < n_pairs:
            groups.append(GroupSpec((pid, pid + 1), entry, float(speeds[i]), int(dirs[i]),
                                    float(lanes[i]), offset_mm))
            pid += 2
        else:
            singles.append(WalkerSpec(pid, entry, float(speeds[i]), int(dirs[i]), float(lanes[i])))
            pid += 1
    return ScenarioSpec(singles=singles, groups=groups, noise_mm=noise_mm)
