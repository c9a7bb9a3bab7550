"""Group/single pedestrian classification and interaction metrics for tracking data."""

__version__ = "0.1.0"
