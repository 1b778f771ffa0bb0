"""Hypothesis strategies shared across the suite.

Coordinates are drawn on a millimeter lattice within city-scale bounds and
timestamps as increasing integers. That keeps cases realistic for the
fixed-point pipeline (which quantizes to the same lattice) while leaving
interpolation genuinely fractional.
"""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from fedtraj import Trajectory

COORD_MM = st.integers(min_value=-9_999_000, max_value=9_999_000)


def coord() -> st.SearchStrategy[float]:
    return COORD_MM.map(lambda mm: mm / 1000.0)


@st.composite
def trajectory_points(draw, min_points: int = 1, max_points: int = 8) -> np.ndarray:
    n = draw(st.integers(min_points, max_points))
    steps = draw(
        st.lists(st.integers(1, 120), min_size=max(0, n - 1), max_size=max(0, n - 1))
    )
    t0 = draw(st.integers(0, 10_000))
    ts = [float(t0)]
    for s in steps:
        ts.append(ts[-1] + s)
    xs = draw(st.lists(coord(), min_size=n, max_size=n))
    ys = draw(st.lists(coord(), min_size=n, max_size=n))
    return np.column_stack([ts, xs, ys])


@st.composite
def trajectories(draw, min_points: int = 1, max_points: int = 8, ident: str = "t") -> Trajectory:
    return Trajectory(id=ident, points=draw(trajectory_points(min_points, max_points)))


@st.composite
def query_on(draw, points: np.ndarray, max_queries: int = 5) -> np.ndarray:
    """Query points with timestamps inside the span of ``points``."""
    lo, hi = int(points[0, 0]), int(points[-1, 0])
    k = draw(st.integers(1, max_queries))
    qts = sorted(draw(st.lists(st.integers(lo, hi), min_size=k, max_size=k)))
    qx = draw(st.lists(coord(), min_size=k, max_size=k))
    qy = draw(st.lists(coord(), min_size=k, max_size=k))
    return np.column_stack([np.asarray(qts, dtype=np.float64), qx, qy])
