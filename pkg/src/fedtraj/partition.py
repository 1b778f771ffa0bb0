"""Candidate partitioning and per-partition reference envelopes.

After grid filtering, every candidate is within tau of every published cell.
Candidates are split recursively, along the published cell with the widest
visit-time span, at the median of the members' visit end times, until no
partition exceeds the size cap m = floor(alpha * sqrt(|TC|)).

Each partition gets a reference envelope: one space-time segment per
published cell, spanning the earliest entry to the latest exit that any
member makes into the tau-inflated cell (the cell square grown by a tau
disc). A member "visits" a cell whenever its path comes within tau of the
cell square; the inflated cell is convex, so any point interpolated on an
envelope segment stays inside it, and a query point in the cell is then
within tau + sqrt(2) L of the envelope wherever a member could have matched
it. That is the pruning bound: an envelope that fails the relaxed match test
certifies that no member can pass the strict one.

Visit windows are taken at segment granularity (the whole first and last
path segments that graze the inflated cell), with endpoints projected into
the inflated cell. The window is a superset of the exact visit times and the
endpoints still lie in the convex region, so the pruning bound is preserved;
the envelope is merely slightly looser than the tightest one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, InternalError
from .geometry import Trajectory
from .grid import GridId, GridSpec, segment_box_distance2

__all__ = [
    "PartitionParams",
    "GridVisit",
    "Partition",
    "ReferenceTrajectory",
    "grid_visits",
    "partition_candidates",
    "reference_trajectory",
    "prune_threshold",
]


@dataclass(frozen=True)
class PartitionParams:
    """Partitioning knob alpha; the size cap scales with sqrt of the candidate count."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigurationError(f"alpha must be > 0, got {self.alpha}")

    def max_size(self, n_candidates: int) -> int:
        return max(1, math.floor(self.alpha * math.sqrt(n_candidates)))


@dataclass(frozen=True)
class GridVisit:
    """One member's visit window for one cell, endpoints inside the inflated cell."""

    entry_ts: float
    exit_ts: float
    entry_xy: tuple[float, float]
    exit_xy: tuple[float, float]


@dataclass(frozen=True)
class Partition:
    """A group of candidate ids plus their joint visit window per published cell."""

    members: tuple[str, ...]
    intervals: Mapping[GridId, tuple[float, float]]


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Per-cell envelope segments for one partition, aligned with ``grids``."""

    grids: tuple[GridId, ...]
    segments: np.ndarray  # (|grids|, 6) rows of (o_ts, o_x, o_y, d_ts, d_x, d_y)

    def segment_array(self) -> np.ndarray:
        return self.segments


def _project_into_inflated(
    x: float, y: float, box: tuple[float, float, float, float], tau: float
) -> tuple[float, float]:
    """Nearest-point pullback into the cell square grown by a tau disc.

    Containment holds in exact arithmetic, not just under float comparison:
    anything within a few ulps of the boundary is pulled in by a margin wide
    enough to swallow every rounding in the projection. The displacement is
    under a nanometer, invisible at the protocol's millimeter resolution.
    """
    bx0, by0, bx1, by1 = box
    cx = min(max(x, bx0), bx1)
    cy = min(max(y, by0), by1)
    dx, dy = x - cx, y - cy
    d = math.hypot(dx, dy)
    margin = 1.0 - 2.0 ** -35
    if d <= tau * margin:
        return x, y
    s = (tau / d) * margin
    return cx + dx * s, cy + dy * s


def grid_visits(
    t: Trajectory, grids: Sequence[GridId], tau: float, spec: GridSpec
) -> dict[GridId, GridVisit]:
    """Visit window of t for every published cell.

    A candidate that survived grid filtering must graze every published cell;
    a cell with no touching segment means the filter contract was broken
    upstream and is reported as an internal error.
    """
    seg = t.segment_array()
    tau2 = tau * tau
    out: dict[GridId, GridVisit] = {}
    for g in grids:
        box = spec.box(g)
        d2 = segment_box_distance2(
            seg[:, 1], seg[:, 2], seg[:, 4], seg[:, 5], box[0], box[1], box[2], box[3]
        )
        touching = np.flatnonzero(d2 <= tau2)
        if touching.size == 0:
            raise InternalError(
                f"candidate {t.id!r} never comes within {tau} of cell {tuple(g)}; "
                "grid filter contract violated"
            )
        first, last = seg[touching[0]], seg[touching[-1]]
        out[g] = GridVisit(
            entry_ts=float(first[0]),
            exit_ts=float(last[3]),
            entry_xy=_project_into_inflated(float(first[1]), float(first[2]), box, tau),
            exit_xy=_project_into_inflated(float(last[4]), float(last[5]), box, tau),
        )
    return out


def _intervals(
    members: Sequence[str],
    grids: Sequence[GridId],
    visits: Mapping[str, Mapping[GridId, GridVisit]],
) -> dict[GridId, tuple[float, float]]:
    return {
        g: (
            min(visits[tid][g].entry_ts for tid in members),
            max(visits[tid][g].exit_ts for tid in members),
        )
        for g in grids
    }


def partition_candidates(
    ordered_ids: Sequence[str],
    grids: Sequence[GridId],
    visits: Mapping[str, Mapping[GridId, GridVisit]],
    params: PartitionParams,
) -> list[Partition]:
    """Split candidates until no group exceeds m = floor(alpha * sqrt(|TC|)).

    The split cell is the one whose joint visit window is longest (ties to
    the lexicographically smallest cell id); members at or below the lower
    median of visit end times go left. A degenerate split (all ends equal)
    falls back to halving in id order so termination never depends on data.
    """
    ids = list(ordered_ids)
    if not ids:
        raise ConfigurationError("cannot partition an empty candidate set")
    m = params.max_size(len(ids))

    done: list[Partition] = []
    work = [ids]  # LIFO, left pushed last, so finished partitions keep left-first order
    while work:
        members = work.pop()
        if len(members) <= m:
            done.append(Partition(tuple(members), _intervals(members, grids, visits)))
            continue
        iv = _intervals(members, grids, visits)
        g_split = min(iv, key=lambda g: (-(iv[g][1] - iv[g][0]), tuple(g)))
        ends = {tid: visits[tid][g_split].exit_ts for tid in members}
        v = sorted(ends.values())[(len(members) - 1) // 2]
        left = [tid for tid in members if ends[tid] <= v]
        right = [tid for tid in members if ends[tid] > v]
        if not left or not right:
            half = math.ceil(len(members) / 2)
            left, right = members[:half], members[half:]
        work.append(right)
        work.append(left)
    return done


def reference_trajectory(
    part: Partition,
    grids: Sequence[GridId],
    visits: Mapping[str, Mapping[GridId, GridVisit]],
) -> ReferenceTrajectory:
    """Envelope segments: earliest entry to latest exit per cell over members."""
    rows = np.empty((len(grids), 6))
    for i, g in enumerate(grids):
        entry = min((visits[tid][g] for tid in part.members), key=lambda vi: vi.entry_ts)
        exit_ = max((visits[tid][g] for tid in part.members), key=lambda vi: vi.exit_ts)
        rows[i] = (
            entry.entry_ts, entry.entry_xy[0], entry.entry_xy[1],
            exit_.exit_ts, exit_.exit_xy[0], exit_.exit_xy[1],
        )
    return ReferenceTrajectory(grids=tuple(grids), segments=rows)


def prune_threshold(tau: float, cell_side: float) -> float:
    """Relaxed match threshold for envelope pruning: tau + sqrt(2) * L.

    Only valid when the cell side exceeds tau; otherwise the envelope bound
    does not hold and the configuration must move to a larger grid.
    """
    if not cell_side > tau:
        raise ConfigurationError(
            f"pruning needs cell side > tau, got L={cell_side} tau={tau}; "
            "increase the grid size or lower tau"
        )
    return tau + math.sqrt(2.0) * cell_side
