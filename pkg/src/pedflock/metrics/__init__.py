"""Spatial utilisation and interaction-behaviour metrics."""

from pedflock.metrics.behavior import (
    EVENT_TYPES,
    BinGrid,
    EncounterEvent,
    clearance_radius,
    detect_encounters,
    ecdf,
    groupsize_distance_regression,
    heading_change,
    interaction_timeline,
    speed_change,
    trajectory_straightness,
)
from pedflock.metrics.spatial import (
    HeatmapGrid,
    SpatialFootprint,
    accumulate_heatmap,
    convex_hull,
    convex_hull_area,
    smallest_enclosing_circle,
)

__all__ = [
    "EVENT_TYPES", "BinGrid", "EncounterEvent", "HeatmapGrid", "SpatialFootprint",
    "accumulate_heatmap", "clearance_radius", "convex_hull", "convex_hull_area",
    "detect_encounters", "ecdf", "groupsize_distance_regression", "heading_change",
    "interaction_timeline", "smallest_enclosing_circle", "speed_change",
    "trajectory_straightness",
]
