import numpy as np
import pytest

from pedflock.binning import TimeBin, TrajectoryWindow
from pedflock.ingest import Trajectory

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def make_track(pid, xy, t0=0, rate_hz=3.0, speed=None, motion=None, facing=None, times=None):
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    n = len(xy)
    t = np.asarray(times) if times is not None else t0 + np.round(np.arange(n) * 1000.0 / rate_hz)
    speed = np.full(n, 1000.0) if speed is None else np.broadcast_to(speed, (n,))
    motion = np.zeros(n) if motion is None else np.broadcast_to(motion, (n,))
    facing = motion if facing is None else np.broadcast_to(facing, (n,))
    return Trajectory.from_columns(pid, t, xy[:, 0], xy[:, 1], speed, motion, facing)


def make_window(pid, xy, bin_index=0, rate_hz=3.0, **kw):
    return TrajectoryWindow(make_track(pid, xy, rate_hz=rate_hz, **kw), bin_index, rate_hz)


def make_bin(windows, bin_index=0, t_start=0, interval=60_000):
    return TimeBin(bin_index, t_start, t_start + interval, list(windows))


def line(n, start=(0.0, 0.0), step=(100.0, 0.0)):
    k = np.arange(n)[:, None]
    return np.asarray(start) + k * np.asarray(step)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
