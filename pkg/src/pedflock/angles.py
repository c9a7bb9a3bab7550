"""Circular helpers shared by the resampler, pair features and behavior metrics."""

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap(a):
    """Wrap angles into (-pi, pi]; an exact +-pi lands on +pi.

    Values already inside the interval come back bit-identical.
    """
    a = np.asarray(a, dtype=float)
    return np.where((a > -np.pi) & (a <= np.pi), a, np.pi - np.mod(np.pi - a, TWO_PI))


def wrap_scalar(a: float) -> float:
    return float(wrap(a))


def circular_mean(angles, min_resultant: float = 1e-9):
    """Direction of the mean unit vector, or None when that vector vanishes."""
    a = np.asarray(angles, dtype=float)
    if a.size == 0:
        return None
    c = np.cos(a).mean()
    s = np.sin(a).mean()
    if np.hypot(c, s) < min_resultant:
        return None
    return float(np.arctan2(s, c))


def abs_angle_diff(a: float, b: float) -> float:
    """Unsigned shortest-arc difference, in [0, pi].

    Computed from the ordered pair so that swapping the arguments gives a
    bit-identical result.
    """
    lo, hi = (a, b) if a <= b else (b, a)
    return abs(wrap_scalar(hi - lo))
