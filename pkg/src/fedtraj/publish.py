"""Client-side query publishing.

Each query location is perturbed with bounded planar Laplace noise; a
location becomes a candidate only when its perturbed copy lands in the same
grid cell, so every published cell is the true cell of one of the query's own
points while the decision to publish it depends on the noisy copy alone.
From the candidates a fixed-size random subset is chosen and its cells,
deduplicated, form the published sequence. Raw coordinates and timestamps
never leave this module's return value; only the caller decides what goes on
the wire, and the wire format carries cells only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, PublishFailure
from .geometry import Trajectory
from .grid import GridId, GridSpec
from .privacy import NoiseBound, PrivacyParams, bpl_perturb

__all__ = ["PublishedQuery", "publish", "publish_with_retry"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PublishedQuery:
    """Outcome of one publish call.

    ``grids`` is what data owners may see. ``points`` is the subtrajectory of
    the query whose locations generated those cells, and ``indices`` maps its
    rows back to positions in the original query; both stay on the client.
    """

    grids: tuple[GridId, ...]
    points: Trajectory
    indices: tuple[int, ...]
    spec: GridSpec
    tau: float

    def __post_init__(self):
        if len(set(self.grids)) != len(self.grids):
            raise DomainError("published grid sequence contains repeats")


def publish(
    t_q: Trajectory,
    tau: float,
    params: PrivacyParams,
    bound: NoiseBound,
    spec: GridSpec,
    rng: np.random.Generator,
) -> PublishedQuery:
    """Perturb, keep in-cell candidates, select floor(rho * n) of them.

    Raises PublishFailure when no perturbation stayed in-cell (the caller may
    retry with fresh randomness, at a privacy cost this module does not
    account) or when rho * n rounds down to zero grids.
    """
    if not tau > 0:
        raise DomainError(f"tau must be > 0, got {tau}")
    if spec.cell_side != bound.cell_side:
        raise ConfigurationError(
            f"grid side {spec.cell_side} disagrees with the noise bound's {bound.cell_side}"
        )

    n = len(t_q)
    n_select = math.floor(params.rho * n)
    if n_select == 0:
        raise PublishFailure(
            f"rho={params.rho} selects zero of {n} query points; nothing to publish"
        )

    xy = t_q.xy
    noisy = bpl_perturb(xy, bound, params.epsilon, rng)
    in_cell = np.all(spec.cells(noisy) == spec.cells(xy), axis=1)
    cand = np.flatnonzero(in_cell)
    if cand.size == 0:
        raise PublishFailure("every perturbed point left its cell; retry with a fresh seed")

    take = min(n_select, cand.size)
    chosen = np.sort(rng.choice(cand, size=take, replace=False))

    cells = spec.cells(xy[chosen])
    grids = tuple(
        dict.fromkeys(GridId(int(ix), int(iy)) for ix, iy in cells)
    )
    sub = Trajectory(id=t_q.id, points=t_q.points[chosen])
    return PublishedQuery(
        grids=grids,
        points=sub,
        indices=tuple(int(i) for i in chosen),
        spec=spec,
        tau=tau,
    )


def publish_with_retry(
    t_q: Trajectory,
    tau: float,
    params: PrivacyParams,
    bound: NoiseBound,
    spec: GridSpec,
    rng: np.random.Generator,
    max_attempts: int = 8,
) -> PublishedQuery:
    """Publish, redrawing noise until at least one point survives.

    Each retry spends additional privacy budget on the same trajectory, so
    every redraw is logged as a warning. With the success target at 0.81 per
    point the chance of all attempts failing is negligible for realistic
    query lengths; if it happens anyway the last failure propagates.
    """
    if math.floor(params.rho * len(t_q)) == 0:
        # Deterministic in (rho, n); redrawing noise cannot help.
        return publish(t_q, tau, params, bound, spec, rng)

    for attempt in range(max_attempts):
        try:
            return publish(t_q, tau, params, bound, spec, rng)
        except PublishFailure:
            if attempt == max_attempts - 1:
                raise
            log.warning(
                "publish attempt %d for %s kept no points; redrawing noise "
                "(each redraw consumes extra privacy budget)",
                attempt + 1,
                t_q.id,
            )
    raise AssertionError("unreachable")  # pragma: no cover
