"""Synthetic trajectory corpora for tests and benchmarks.

Trajectories are random waypoint walks between hotspot-clustered targets:
a walker picks a hotspot-biased waypoint, moves toward it at a sampled
speed with jitter, and re-targets on arrival. Hotspots concentrate traffic
so grid filtering sees realistic spatial skew instead of uniform noise.

All emitted coordinates and timestamps are snapped to the 1e-3 lattice the
secure protocol quantizes to, so fixed-point encoding is lossless on
generated data. Timestamps are strictly increasing within a trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .geometry import Trajectory

__all__ = ["CorpusParams", "generate_corpus", "subsample_query", "split_shards"]


@dataclass(frozen=True)
class CorpusParams:
    """Shape of a synthetic corpus; defaults give a 20 km city with 6 hotspots."""

    n_trajectories: int
    region: float = 20_000.0  # square side, meters
    n_hotspots: int = 6
    hotspot_sigma: float = 1_200.0  # spread of traffic around a hotspot, meters
    points_min: int = 8
    points_max: int = 24
    speed_min: float = 4.0  # m/s
    speed_max: float = 18.0
    step_seconds_min: float = 20.0
    step_seconds_max: float = 90.0
    start_window: float = 3_600.0  # latest trajectory start time, seconds

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ConfigurationError("n_trajectories must be >= 1")
        if self.points_min < 2 or self.points_max < self.points_min:
            raise ConfigurationError("need points_max >= points_min >= 2")
        if not 0 < self.speed_min <= self.speed_max:
            raise ConfigurationError("need 0 < speed_min <= speed_max")


def _snap(a: np.ndarray) -> np.ndarray:
    return np.round(a, 3)


def generate_corpus(params: CorpusParams, rng: np.random.Generator) -> list[Trajectory]:
    """Deterministic under the generator's seed; ids are t000000, t000001, ..."""
    hotspots = rng.uniform(0.15, 0.85, size=(params.n_hotspots, 2)) * params.region
    out = []
    for i in range(params.n_trajectories):
        out.append(Trajectory(id=f"t{i:06d}", points=_walk(params, hotspots, rng)))
    return out


def _walk(params: CorpusParams, hotspots: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = int(rng.integers(params.points_min, params.points_max + 1))
    pos = hotspots[rng.integers(len(hotspots))] + rng.normal(0, params.hotspot_sigma, 2)
    target = hotspots[rng.integers(len(hotspots))] + rng.normal(0, params.hotspot_sigma, 2)
    ts = float(rng.uniform(0, params.start_window))
    speed = float(rng.uniform(params.speed_min, params.speed_max))

    rows = np.empty((n, 3))
    for k in range(n):
        rows[k] = (ts, pos[0], pos[1])
        dt = float(rng.uniform(params.step_seconds_min, params.step_seconds_max))
        ts += dt
        to_target = target - pos
        dist = float(np.hypot(*to_target))
        step = speed * dt
        if dist <= step:
            # Arrive and re-target; the leftover distance is dropped, which
            # just makes the walker dwell briefly near the hotspot.
            pos = target + rng.normal(0, params.hotspot_sigma * 0.05, 2)
            target = hotspots[rng.integers(len(hotspots))] + rng.normal(
                0, params.hotspot_sigma, 2
            )
            speed = float(rng.uniform(params.speed_min, params.speed_max))
        else:
            jitter = rng.normal(0, step * 0.05, 2)
            pos = pos + to_target * (step / dist) + jitter

    rows[:, 0] = _snap(rows[:, 0])
    rows[:, 1:] = _snap(rows[:, 1:])
    # Snapping cannot collapse timestamps: steps are >= 20 s on a 1 ms lattice.
    return rows


def subsample_query(
    t: Trajectory, rate: float, rng: np.random.Generator, min_points: int = 2
) -> Trajectory:
    """Reserve a fraction of a trajectory's points, in order, as a query."""
    if not 0 < rate <= 1:
        raise ConfigurationError(f"sampling rate must be in (0, 1], got {rate}")
    n = len(t)
    keep = max(min(min_points, n), int(round(rate * n)))
    idx = np.sort(rng.choice(n, size=min(keep, n), replace=False))
    return Trajectory(id=f"{t.id}-q", points=t.points[idx])


def split_shards(trajectories: list[Trajectory], k: int) -> list[list[Trajectory]]:
    """Deal trajectories round-robin into k owner shards."""
    if k < 1:
        raise ConfigurationError("need at least one shard")
    shards: list[list[Trajectory]] = [[] for _ in range(k)]
    for i, t in enumerate(trajectories):
        shards[i % k].append(t)
    return shards
