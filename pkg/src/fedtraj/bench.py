"""Desk-scale benchmark sweeps over the pipeline's tuning knobs.

Each sweep cell fixes (epsilon, sampling rate, alpha, database size, owner
count), runs a batch of queries through real loopback servers, and reports
batch means. Cells whose derived geometry is unusable (the solved cell side
not exceeding tau, or no noise fixed point) are flagged infeasible and the
sweep moves on; everything is deterministic under the sweep seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from itertools import product
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, PublishFailure
from .config import OwnerConfig
from .datagen import CorpusParams, generate_corpus, split_shards, subsample_query
from .geometry import Trajectory
from .grid import GridSpec, build_index
from .node import FederationResult, OwnerServer, OwnerState, query_federation
from .partition import PartitionParams, prune_threshold
from .privacy import PrivacyParams, solve_noise_bound
from .publish import publish_with_retry
from .secure import CostModel
from . import wire

__all__ = ["SweepGrid", "SweepRow", "sweep", "write_csv", "CSV_COLUMNS"]

CSV_COLUMNS = (
    "epsilon",
    "sampling_rate",
    "alpha",
    "db_size",
    "owners",
    "retention",
    "bytes",
    "wall_ms",
    "n_r",
    "partitions",
    "infeasible",
)


@dataclass(frozen=True)
class SweepGrid:
    """The swept parameter sets; defaults mirror the usual experiment ranges."""

    epsilons: tuple[float, ...] = (0.01, 0.02, 0.03, 0.04, 0.05)
    sampling_rates: tuple[float, ...] = (0.05, 0.1, 0.2, 0.4)
    alphas: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)
    db_sizes: tuple[int, ...] = (1000,)
    owner_counts: tuple[int, ...] = (1,)


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    sampling_rate: float
    alpha: float
    db_size: int
    owners: int
    retention: float
    bytes: float
    wall_ms: float
    n_r: float
    partitions: float
    infeasible: bool


def sweep(
    grid: SweepGrid,
    tau: float,
    delta: float = 1e-5,
    rho: float = 0.6,
    p0: float = 0.81,
    queries_per_cell: int = 20,
    seed: int = 7,
    corpus: CorpusParams | None = None,
    mode: int = wire.MODE_FILTERED,
) -> list[SweepRow]:
    """Run every cell of the grid and return one aggregate row per cell."""
    corpora: dict[int, list[Trajectory]] = {}
    rows = []
    cells = list(
        product(grid.epsilons, grid.sampling_rates, grid.alphas, grid.db_sizes, grid.owner_counts)
    )
    for cell_idx, (eps, rate, alpha, n_db, k_owners) in enumerate(cells):
        if n_db not in corpora:
            params = corpus or CorpusParams(n_trajectories=n_db)
            if params.n_trajectories != n_db:
                params = replace(params, n_trajectories=n_db)
            corpora[n_db] = generate_corpus(params, np.random.default_rng([seed, n_db]))
        rows.append(
            _run_cell(
                corpora[n_db], eps, rate, alpha, n_db, k_owners,
                tau, delta, rho, p0, queries_per_cell, seed, cell_idx, mode,
            )
        )
    return rows


def _run_cell(
    corpus, eps, rate, alpha, n_db, k_owners,
    tau, delta, rho, p0, n_queries, seed, cell_idx, mode,
) -> SweepRow:
    def infeasible() -> SweepRow:
        return SweepRow(eps, rate, alpha, n_db, k_owners, 0.0, 0.0, 0.0, 0.0, 0.0, True)

    try:
        privacy = PrivacyParams(epsilon=eps, delta=delta, rho=rho, p0=p0)
        bound = solve_noise_bound(privacy)
        spec = GridSpec(0.0, 0.0, bound.cell_side)
        prune_threshold(tau, bound.cell_side)  # reject cells where pruning is unsound
    except ConfigurationError:
        return infeasible()

    shards = split_shards(corpus, k_owners)
    servers = []
    try:
        for shard in shards:
            state = OwnerState(
                config=OwnerConfig(
                    database=Path("<memory>"),
                    index=Path("<memory>"),
                    spec=spec,
                    tau=tau,
                    listen=("127.0.0.1", 0),
                    partition=PartitionParams(alpha=alpha),
                    cost=CostModel(),
                ),
                trajectories={t.id: t for t in shard},
                index=build_index(shard, tau, spec),
            )
            servers.append(OwnerServer(state).start())
        addresses = [s.address for s in servers]

        agg = {"retention": [], "bytes": [], "wall": [], "n_r": [], "parts": []}
        rng_pick = np.random.default_rng([seed, cell_idx, 1])
        for q_idx in range(n_queries):
            src = corpus[int(rng_pick.integers(len(corpus)))]
            t_q = subsample_query(src, rate, np.random.default_rng([seed, cell_idx, 2, q_idx]))
            published = None
            if mode == wire.MODE_FILTERED:
                try:
                    published = publish_with_retry(
                        t_q, tau, privacy, bound, spec,
                        np.random.default_rng([seed, cell_idx, 3, q_idx]),
                    )
                except PublishFailure:
                    continue  # spent its retries; skip the query, keep the cell
            fr: FederationResult = query_federation(
                addresses, t_q, spec, tau, mode=mode, published=published
            )
            ms = [r.metrics for r in fr.per_owner.values()]
            total_db = sum(m.db_size for m in ms)
            total_tc = sum(m.candidate_count for m in ms)
            agg["retention"].append(total_tc / total_db if total_db else 0.0)
            agg["bytes"].append(fr.total_bytes)
            agg["wall"].append(fr.wall_ms)
            agg["n_r"].append(sum(m.n_r for m in ms))
            agg["parts"].append(sum(m.partition_count for m in ms))
    finally:
        for s in servers:
            s.shutdown()

    n = len(agg["retention"])
    if n == 0:
        return infeasible()
    return SweepRow(
        epsilon=eps,
        sampling_rate=rate,
        alpha=alpha,
        db_size=n_db,
        owners=k_owners,
        retention=float(np.mean(agg["retention"])),
        bytes=float(np.mean(agg["bytes"])),
        wall_ms=float(np.mean(agg["wall"])),
        n_r=float(np.mean(agg["n_r"])),
        partitions=float(np.mean(agg["parts"])),
        infeasible=False,
    )


def write_csv(rows: list[SweepRow], path) -> None:
    if hasattr(path, "write"):
        _emit_csv(rows, path)
        return
    with open(path, "w", newline="") as f:
        _emit_csv(rows, f)


def _emit_csv(rows: list[SweepRow], f) -> None:
    w = csv.writer(f)
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(
            [
                r.epsilon, r.sampling_rate, r.alpha, r.db_size, r.owners,
                f"{r.retention:.6f}", f"{r.bytes:.1f}", f"{r.wall_ms:.2f}",
                f"{r.n_r:.2f}", f"{r.partitions:.2f}", int(r.infeasible),
            ]
        )
