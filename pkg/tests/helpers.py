"""Shared builders for protocol-level tests.

Owners here live entirely in memory: state is assembled from a corpus and
served on an ephemeral loopback port, so tests never touch the filesystem
unless persistence is the thing under test.
"""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

import numpy as np

from fedtraj import (
    CorpusParams,
    CostModel,
    GridSpec,
    OwnerConfig,
    OwnerServer,
    OwnerState,
    PartitionParams,
    PrivacyParams,
    Trajectory,
    build_index,
    generate_corpus,
    solve_noise_bound,
)

MEMORY = Path("<memory>")


def make_state(
    corpus: list[Trajectory],
    tau: float,
    spec: GridSpec,
    alpha: float = 0.5,
    cost: CostModel = CostModel(),
) -> OwnerState:
    return OwnerState(
        config=OwnerConfig(
            database=MEMORY,
            index=MEMORY,
            spec=spec,
            tau=tau,
            listen=("127.0.0.1", 0),
            partition=PartitionParams(alpha=alpha),
            cost=cost,
        ),
        trajectories={t.id: t for t in corpus},
        index=build_index(corpus, tau, spec),
    )


@contextmanager
def served(*states: OwnerState, retain_transcripts: bool = False):
    """Start one server per state; yields the list of servers."""
    servers = [OwnerServer(s, retain_transcripts=retain_transcripts) for s in states]
    try:
        for s in servers:
            s.start()
        yield servers
    finally:
        for s in servers:
            s.shutdown()


def solved_setup(epsilon: float, tau: float, delta: float = 1e-5, rho: float = 0.6, p0: float = 0.81):
    """Privacy params, noise bound, and the grid they dictate, in one call."""
    params = PrivacyParams(epsilon=epsilon, delta=delta, rho=rho, p0=p0)
    bound = solve_noise_bound(params)
    return params, bound, GridSpec(0.0, 0.0, bound.cell_side)


def small_corpus(n: int, seed: int, **overrides) -> list[Trajectory]:
    return generate_corpus(
        CorpusParams(n_trajectories=n, **overrides), np.random.default_rng(seed)
    )
