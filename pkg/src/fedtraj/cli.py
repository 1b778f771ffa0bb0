"""Operator command line: parameter solving, publishing, queries, benchmarks.

Subcommands map onto the library one-to-one; nothing here contains logic
beyond argument parsing, file plumbing, and exit-code policy. Failures are
partitioned deterministically: bad flags or bad config exit 2, protocol and
transport trouble exit 1, anything unexpected exits 3, and every non-usage
failure emits one structured JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import wire
from .bench import SweepGrid, sweep, write_csv
from .config import load_federation, load_owner_config, parse_listen
from .datagen import CorpusParams, generate_corpus
from .errors import (
    ConfigurationError,
    DomainError,
    IndexFormatError,
    IngestError,
    ProtocolError,
    PartialResultError,
    PublishFailure,
    TransportError,
)
from .geometry import Trajectory
from .ingest import dump_ndjson, load_ndjson
from .grid import GridSpec
from .node import FederationResult, query_federation, serve
from .privacy import PrivacyParams, solve_noise_bound
from .publish import PublishedQuery, publish_with_retry
from .report import QueryRecord, RunReport

__all__ = ["main"]

log = logging.getLogger(__name__)

EXIT_PROTOCOL = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3

_USAGE_ERRORS = (ConfigurationError, DomainError, IngestError, IndexFormatError, OSError)
_PROTOCOL_ERRORS = (ProtocolError, TransportError, PublishFailure)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except _PROTOCOL_ERRORS as exc:
        _emit_error("protocol", exc)
        return EXIT_PROTOCOL
    except _USAGE_ERRORS as exc:
        _emit_error("usage", exc)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return 130  # conventional SIGINT status
    except Exception as exc:  # noqa: BLE001 - exit-code policy wants a catch-all
        log.exception("unhandled failure")
        _emit_error("internal", exc)
        return EXIT_INTERNAL


def _emit_error(kind: str, exc: Exception) -> None:
    detail: dict[str, object] = {
        "kind": kind,
        "type": type(exc).__name__,
        "message": str(exc),
    }
    if isinstance(exc, PartialResultError):
        detail["owners"] = {name: str(e) for name, e in sorted(exc.failed.items())}
    print(json.dumps({"error": detail}), file=sys.stderr)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedtraj",
        description="Privacy-preserving federated trajectory matching toolkit.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-params", help="solve the noise bound and grid cell side")
    p.add_argument("--epsilon", type=float, required=True, help="privacy budget")
    p.add_argument("--delta", type=float, required=True, help="density slack (1/m^2)")
    p.add_argument("--p0", type=float, default=0.81, help="per-point success target")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=_cmd_solve_params)

    p = sub.add_parser("publish", help="perturb a query and print its grid ids")
    p.add_argument("--query", required=True, help="NDJSON file holding the query")
    p.add_argument("--id", default=None, help="trajectory id when the file has several")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--rho", type=float, default=0.6, help="fraction of points to keep")
    p.add_argument("--p0", type=float, default=0.81)
    p.add_argument("--tau", type=float, required=True, help="matching distance (m)")
    p.add_argument("--origin", default="0,0", help="grid origin as x,y")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_publish)

    p = sub.add_parser("query", help="run a federated query batch")
    p.add_argument("--owners", required=True, help="comma-separated host:port list")
    p.add_argument("--query", required=True, help="NDJSON file of query trajectories")
    p.add_argument("--federation", required=True, help="shared federation config (TOML)")
    p.add_argument("--mode", choices=("filtered", "naive"), default="filtered")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--rho", type=float, default=0.6)
    p.add_argument("--p0", type=float, default=0.81)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallel", action="store_true", help="run batch queries concurrently")
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("bench", help="sweep configurations and emit a CSV matrix")
    p.add_argument("--queries", type=int, default=100, help="queries per configuration cell")
    p.add_argument("--db", default="1000", help="comma-separated database sizes")
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--rho", type=float, default=0.6)
    p.add_argument("--p0", type=float, default=0.81)
    p.add_argument("--epsilons", default=None, help="comma-separated, default 0.01..0.05")
    p.add_argument("--rates", default=None, help="comma-separated sampling rates")
    p.add_argument("--alphas", default=None, help="comma-separated partition factors")
    p.add_argument("--owner-counts", default=None, help="comma-separated owner counts")
    p.add_argument("--mode", choices=("filtered", "naive"), default="filtered")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", default="-", help="CSV path, - for stdout")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("gen-data", help="emit a synthetic NDJSON corpus")
    p.add_argument("--n", type=int, required=True, help="trajectory count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", help="NDJSON path, - for stdout")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("serve", help="run a data-owner server")
    p.add_argument("--config", required=True, help="owner config (TOML)")
    p.add_argument("--build-index", action="store_true", help="rebuild the index from the database")
    p.add_argument("--db", default=None, help="override the database path")
    p.add_argument("--index", default=None, help="override the index path")
    p.set_defaults(func=_cmd_serve)

    return parser


def _cmd_solve_params(args: argparse.Namespace) -> int:
    params = PrivacyParams(epsilon=args.epsilon, delta=args.delta, p0=args.p0)
    bound = solve_noise_bound(params)
    values = {
        "epsilon": params.epsilon,
        "delta": params.delta,
        "p0": params.p0,
        "delta_mass": bound.delta_mass,
        "radius": bound.radius,
        "cell_side": bound.cell_side,
    }
    if args.json:
        print(json.dumps(values, sort_keys=True))
    else:
        for name, value in values.items():
            print(f"{name:<10} = {value:.17g}")
    return 0


def _pick_query(path: str, wanted: str | None) -> Trajectory:
    trajectories = load_ndjson(path)
    if wanted is not None:
        for t in trajectories:
            if t.id == wanted:
                return t
        raise IngestError(f"no trajectory {wanted!r} in {path}")
    if len(trajectories) != 1:
        raise IngestError(
            f"{path} holds {len(trajectories)} trajectories; pick one with --id"
        )
    return trajectories[0]


def _cmd_publish(args: argparse.Namespace) -> int:
    t_q = _pick_query(args.query, args.id)
    try:
        ox, oy = (float(v) for v in args.origin.split(","))
    except ValueError:
        raise ConfigurationError(f"--origin must be x,y, got {args.origin!r}") from None
    params = PrivacyParams(epsilon=args.epsilon, delta=args.delta, rho=args.rho, p0=args.p0)
    bound = solve_noise_bound(params)
    spec = GridSpec(origin_x=ox, origin_y=oy, cell_side=bound.cell_side)
    pub = publish_with_retry(
        t_q, args.tau, params, bound, spec, np.random.default_rng(args.seed)
    )
    print(
        json.dumps(
            {
                "schema": "fedtraj-publish/1",
                "id": t_q.id,
                "tau": pub.tau,
                "cell_side": spec.cell_side,
                "origin": [spec.origin_x, spec.origin_y],
                "grids": [[g.ix, g.iy] for g in pub.grids],
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_query(args: argparse.Namespace) -> int:
    owners = [parse_listen(part.strip()) for part in args.owners.split(",") if part.strip()]
    if not owners:
        raise ConfigurationError("--owners named no addresses")
    spec, tau = load_federation(args.federation)
    mode = wire.MODE_FILTERED if args.mode == "filtered" else wire.MODE_NAIVE

    params = bound = None
    if mode == wire.MODE_FILTERED:
        if args.epsilon is None or args.delta is None:
            raise ConfigurationError("filtered mode needs --epsilon and --delta")
        params = PrivacyParams(
            epsilon=args.epsilon, delta=args.delta, rho=args.rho, p0=args.p0
        )
        bound = solve_noise_bound(params)

    queries = load_ndjson(args.query)
    if not queries:
        raise IngestError(f"{args.query} holds no trajectories")

    def one(idx_and_query: tuple[int, Trajectory]) -> QueryRecord:
        idx, t_q = idx_and_query
        published: PublishedQuery | None = None
        if mode == wire.MODE_FILTERED:
            published = publish_with_retry(
                t_q, tau, params, bound, spec, np.random.default_rng([args.seed, idx])
            )
        fr = query_federation(owners, t_q, spec, tau, mode=mode, published=published)
        return _record(fr, published)

    work = list(enumerate(queries))
    if args.parallel and len(work) > 1:
        with ThreadPoolExecutor(max_workers=min(8, len(work))) as pool:
            records = list(pool.map(one, work))
    else:
        records = [one(item) for item in work]

    report = RunReport(records=tuple(records))
    print(report.to_json())
    print(report.table(), file=sys.stderr)
    return 0


def _record(fr: FederationResult, published: PublishedQuery | None) -> QueryRecord:
    metrics = [r.metrics for r in fr.per_owner.values()]
    total_db = sum(m.db_size for m in metrics)
    total_tc = sum(m.candidate_count for m in metrics)
    return QueryRecord(
        result_ids=fr.matched_ids,
        wall_ms=fr.wall_ms,
        bytes_up=sum(m.bytes_up for m in metrics),
        bytes_down=sum(m.bytes_down for m in metrics),
        retention=total_tc / total_db if total_db else 0.0,
        n_grids=len(published.grids) if published is not None else 0,
        partition_count=sum(m.partition_count for m in metrics),
        n_r=sum(m.n_r for m in metrics),
    )


def _floats(text: str, flag: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigurationError(f"{flag} must be comma-separated numbers, got {text!r}") from None


def _ints(text: str, flag: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ConfigurationError(f"{flag} must be comma-separated integers, got {text!r}") from None


def _cmd_bench(args: argparse.Namespace) -> int:
    grid = SweepGrid()
    if args.epsilons is not None:
        grid = replace(grid, epsilons=_floats(args.epsilons, "--epsilons"))
    if args.rates is not None:
        grid = replace(grid, sampling_rates=_floats(args.rates, "--rates"))
    if args.alphas is not None:
        grid = replace(grid, alphas=_floats(args.alphas, "--alphas"))
    if args.owner_counts is not None:
        grid = replace(grid, owner_counts=_ints(args.owner_counts, "--owner-counts"))
    grid = replace(grid, db_sizes=_ints(args.db, "--db"))

    mode = wire.MODE_FILTERED if args.mode == "filtered" else wire.MODE_NAIVE
    rows = sweep(
        grid,
        tau=args.tau,
        delta=args.delta,
        rho=args.rho,
        p0=args.p0,
        queries_per_cell=args.queries,
        seed=args.seed,
        mode=mode,
    )
    if args.out == "-":
        write_csv(rows, sys.stdout)
    else:
        write_csv(rows, args.out)
    return 0


def _cmd_gen_data(args: argparse.Namespace) -> int:
    if args.n <= 0:
        raise ConfigurationError(f"--n must be positive, got {args.n}")
    corpus = generate_corpus(
        CorpusParams(n_trajectories=args.n), np.random.default_rng(args.seed)
    )
    if args.out == "-":
        dump_ndjson(corpus, sys.stdout)
    else:
        dump_ndjson(corpus, args.out)
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    config = load_owner_config(args.config)
    if args.db is not None:
        config = replace(config, database=Path(args.db))
    if args.index is not None:
        config = replace(config, index=Path(args.index))
    try:
        serve(config, rebuild_index=args.build_index)
    except KeyboardInterrupt:
        pass  # operator shutdown, not a failure
    return 0


if __name__ == "__main__":
    sys.exit(main())
