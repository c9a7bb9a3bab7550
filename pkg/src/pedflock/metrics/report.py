"""Run every metric over binned windows plus flock assignments and write plot-ready files."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from pedflock.artifacts import ensure_dir, write_csv, write_json
from pedflock.binning import TimeBin
from pedflock.flock import FlockAssignment
from pedflock.ingest import EnvironmentGeometry
from pedflock.metrics.behavior import (
    DEFAULT_D_ENC_MM,
    DEFAULT_HYSTERESIS_MM,
    DEFAULT_WINDOW,
    EVENT_TYPES,
    BinGrid,
    EncounterEvent,
    clearance_series,
    detect_encounters,
    ecdf,
    groupsize_distance_regression,
    interaction_timeline,
    is_stationary,
    subjects_of,
    trajectory_straightness,
)
from pedflock.metrics.spatial import accumulate_heatmap, footprint


@dataclass
class AnalysisParams:
    d_enc_mm: float = DEFAULT_D_ENC_MM
    hysteresis_mm: float = DEFAULT_HYSTERESIS_MM
    window: int = DEFAULT_WINDOW
    cell_mm: float = 500.0
    seed: int = 0


def _join(ids) -> str:
    return " ".join(str(i) for i in ids)


def analyze(
    bins: Sequence[TimeBin],
    assignments: Sequence[FlockAssignment],
    geometry: EnvironmentGeometry,
    out_dir,
    params: AnalysisParams = AnalysisParams(),
    interval_ms: int = 60_000,
) -> Dict[str, int]:
    """Write footprints, per-agent metrics, heatmaps, encounters, timeline, ECDFs and regression.

    Returns row counts per written file.
    """
    ensure_dir(out_dir)
    by_bin = {a.bin_index: a for a in assignments}
    footprints, agents, events = [], [], []
    positions = []
    for b in bins:
        if not b.windows:
            continue
        asg = by_bin.get(b.bin_index) or FlockAssignment(b.bin_index, [], set(b.pids))
        grid = BinGrid(b)
        flock_of = asg.flock_of()
        for subj in subjects_of(asg):
            pts = np.concatenate([grid.windows[p].xy for p in subj.members if p in grid.windows])
            fp = footprint(subj.sid, b.bin_index, pts, seed=params.seed)
            footprints.append((
                b.bin_index, subj.sid, subj.kind, _join(subj.members), fp.n_points, fp.hull_area_m2,
                fp.sec_center_mm[0], fp.sec_center_mm[1], fp.sec_radius_mm,
                np.pi * fp.sec_radius_mm ** 2 / 1e6,
            ))
        clear = clearance_series(grid)
        for pid in grid.pids:
            w = grid.windows[pid]
            positions.append(w.xy)
            c = clear[:, grid.col[pid]]
            c = c[~np.isnan(c)]
            agents.append((
                b.bin_index, pid, "GROUP" if pid in flock_of else "SINGLE",
                asg.flock_id(flock_of[pid]) if pid in flock_of else None,
                trajectory_straightness(w.xy), int(is_stationary(w.xy)),
                float(c.mean()) if len(c) else None, float(c.min()) if len(c) else None,
            ))
        events += detect_encounters(grid, asg, params.d_enc_mm, params.hysteresis_mm, params.window)

    counts = {}
    counts["footprints.csv"] = write_csv(
        os.path.join(out_dir, "footprints.csv"), "footprints",
        ["bin_index", "subject", "kind", "members", "n_points", "hull_area_m2",
         "sec_cx_mm", "sec_cy_mm", "sec_radius_mm", "sec_area_m2"], footprints)
    counts["agents.csv"] = write_csv(
        os.path.join(out_dir, "agents.csv"), "agents",
        ["bin_index", "pid", "label", "flock_id", "straightness", "stationary",
         "clearance_mean_mm", "clearance_min_mm"], agents)

    heat = accumulate_heatmap(np.concatenate(positions) if positions else np.empty((0, 2)), geometry, params.cell_mm)
    counts["heatmap.csv"] = write_csv(
        os.path.join(out_dir, "heatmap.csv"), "heatmap", ["cell_x", "cell_y", "count", "log10"],
        heat.cells(), cell_mm=params.cell_mm, origin_x=heat.origin[0], origin_y=heat.origin[1])
    locs = np.array([e.location_mm for e in events]).reshape(-1, 2)
    ev_heat = accumulate_heatmap(locs, geometry, params.cell_mm)
    counts["heatmap_encounters.csv"] = write_csv(
        os.path.join(out_dir, "heatmap_encounters.csv"), "heatmap", ["cell_x", "cell_y", "count", "log10"],
        ev_heat.cells(), cell_mm=params.cell_mm, origin_x=ev_heat.origin[0], origin_y=ev_heat.origin[1])

    counts["encounters.csv"] = write_csv(
        os.path.join(out_dir, "encounters.csv"), "encounters",
        ["bin_index", "type", "subject_a", "subject_b", "members_a", "members_b",
         "t_start_ms", "t_end_ms", "t_min_ms", "min_distance_mm", "x_mm", "y_mm",
         "dv_a_mm_s", "dtheta_a_rad", "dv_b_mm_s", "dtheta_b_rad", "group_size"],
        (_event_row(e) for e in events),
        d_enc_mm=params.d_enc_mm, hysteresis_mm=params.hysteresis_mm, window=params.window)

    origin = bins[0].t_start_ms - bins[0].bin_index * interval_ms if bins else 0
    n_minutes = -(-len(bins) * interval_ms // 60_000)
    counts["timeline.csv"] = write_csv(
        os.path.join(out_dir, "timeline.csv"), "timeline", ["minute", "type", "count"],
        interaction_timeline(events, origin, n_minutes), origin_ms=origin)

    for t in EVENT_TYPES:
        values = [e.min_distance_mm for e in events if e.type == t]
        counts[f"ecdf_{t}.csv"] = write_csv(
            os.path.join(out_dir, f"ecdf_{t}.csv"), "ecdf", ["min_distance_mm", "fraction"],
            ecdf(values) if values else [], type=t)

    reg = groupsize_distance_regression(events)
    write_json(os.path.join(out_dir, "regression.json"), {
        "schema": "pedflock-regression/1",
        **reg,
        "event_counts": {t: sum(e.type == t for e in events) for t in EVENT_TYPES},
        "params": {"d_enc_mm": params.d_enc_mm, "hysteresis_mm": params.hysteresis_mm,
                   "window": params.window, "cell_mm": params.cell_mm},
    })
    counts["events"] = len(events)
    return counts


def _event_row(e: EncounterEvent):
    return (
        e.bin_index, e.type, e.subject_a, e.subject_b, _join(e.members_a), _join(e.members_b),
        e.t_start_ms, e.t_end_ms, e.t_min_ms, e.min_distance_mm, e.location_mm[0], e.location_mm[1],
        e.change_a.dv_mm_s, e.change_a.dtheta_rad, e.change_b.dv_mm_s, e.change_b.dtheta_rad,
        e.group_size,
    )
