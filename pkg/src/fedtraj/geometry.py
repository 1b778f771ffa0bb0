"""Trajectory data model and the plaintext matching predicate.

A trajectory is a time-ordered polyline in planar meter coordinates. Between
samples we interpolate linearly in time, so the position at any covered
timestamp is well defined. ``matches`` is the ground-truth predicate the rest
of the pipeline must reproduce: a candidate matches a query iff at every query
timestamp the candidate was within ``tau`` meters of the query location.

Internally a trajectory stores its points as a ``(n, 3)`` float64 array with
columns (ts, x, y); the dataclass wrappers exist for call sites where a single
point or segment is the natural unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "Point",
    "Segment",
    "Trajectory",
    "euclidean",
    "interpolate",
    "locate",
    "locate_many",
    "matches",
]


@dataclass(frozen=True)
class Point:
    """A single timestamped location sample."""

    ts: float
    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.ts) and np.isfinite(self.x) and np.isfinite(self.y)):
            raise DomainError(f"non-finite point ({self.ts}, {self.x}, {self.y})")

    @property
    def loc(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Segment:
    """A directed pair of points; zero duration is allowed."""

    o: Point
    d: Point

    def __post_init__(self):
        if self.o.ts > self.d.ts:
            raise DomainError(f"segment runs backwards: {self.o.ts} > {self.d.ts}")


@dataclass(frozen=True)
class Trajectory:
    """An identified sequence of at least one point, timestamps non-decreasing.

    ``points`` is a read-only (n, 3) array of (ts, x, y) rows.
    """

    id: str
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise DomainError(f"trajectory {self.id!r}: points must be (n>=1, 3)")
        if not np.all(np.isfinite(pts)):
            raise DomainError(f"trajectory {self.id!r}: non-finite coordinates")
        if np.any(np.diff(pts[:, 0]) < 0):
            raise DomainError(f"trajectory {self.id!r}: timestamps decrease")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def ts(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, 1:3]

    @property
    def span(self) -> tuple[float, float]:
        return float(self.points[0, 0]), float(self.points[-1, 0])

    def point(self, i: int) -> Point:
        ts, x, y = self.points[i]
        return Point(float(ts), float(x), float(y))

    def segment_array(self) -> np.ndarray:
        """Segments as a (k, 6) array of (o_ts, o_x, o_y, d_ts, d_x, d_y).

        A single-point trajectory yields one zero-duration segment so that
        per-segment consumers never see an empty list.
        """
        p = self.points
        if p.shape[0] == 1:
            return np.hstack([p, p])
        return np.hstack([p[:-1], p[1:]])

    def segments(self) -> list[Segment]:
        return [
            Segment(Point(*row[:3]), Point(*row[3:]))
            for row in self.segment_array()
        ]


def euclidean(a, b) -> float:
    """Planar L2 distance in meters."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def interpolate(s: Segment, ts: float) -> np.ndarray:
    """Location on segment ``s`` at time ``ts``, linear in time.

    A zero-duration segment answers with its origin location for its single
    covered timestamp (the velocity formula divides by zero there).
    """
    if ts < s.o.ts or ts > s.d.ts:
        raise DomainError(f"ts={ts} outside segment span [{s.o.ts}, {s.d.ts}]")
    dt = s.d.ts - s.o.ts
    if dt == 0.0:
        return s.o.loc
    f = (ts - s.o.ts) / dt
    return np.array([s.o.x + f * (s.d.x - s.o.x), s.o.y + f * (s.d.y - s.o.y)])


def locate_many(t: Trajectory, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized position lookup.

    Returns ``(locs, covered)`` where ``locs`` is (k, 2) and ``covered`` is a
    boolean mask; rows with ``covered`` False are undefined. Timestamps that
    coincide with a stored sample take that sample's location directly, which
    for repeated timestamps means the earliest segment wins.
    """
    ts = np.asarray(ts, dtype=np.float64)
    t_ts = t.points[:, 0]
    n = t_ts.shape[0]
    covered = (ts >= t_ts[0]) & (ts <= t_ts[-1])

    idx = np.searchsorted(t_ts, ts, side="left")
    idx_c = np.clip(idx, 0, n - 1)
    exact = covered & (t_ts[idx_c] == ts)

    # Interior, non-exact: ts strictly between samples idx-1 and idx.
    lo = np.clip(idx - 1, 0, n - 1)
    dt = t_ts[idx_c] - t_ts[lo]
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(dt > 0, (ts - t_ts[lo]) / np.where(dt > 0, dt, 1.0), 0.0)
    interp = t.points[lo, 1:3] + f[:, None] * (t.points[idx_c, 1:3] - t.points[lo, 1:3])

    locs = np.where(exact[:, None], t.points[idx_c, 1:3], interp)
    return locs, covered


def locate(t: Trajectory, ts: float) -> np.ndarray | None:
    """Position of ``t`` at time ``ts``, or None outside its time span."""
    locs, covered = locate_many(t, np.array([ts]))
    if not covered[0]:
        return None
    return locs[0]


def matches(t: Trajectory, t_q: Trajectory, tau: float) -> bool:
    """Def.-of-matching predicate: every query point within ``tau`` of ``t``.

    A query timestamp outside ``t``'s span is an automatic mismatch; there is
    no location to compare against.
    """
    if tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")
    locs, covered = locate_many(t, t_q.points[:, 0])
    if not covered.all():
        return False
    d2 = np.sum((locs - t_q.points[:, 1:3]) ** 2, axis=1)
    return bool(np.all(d2 <= tau * tau))
