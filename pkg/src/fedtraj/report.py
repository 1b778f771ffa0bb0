"""Query run reports: per-query records, batch aggregates, stable output.

The JSON shape is versioned under the ``schema`` key; consumers should pin
on it. Aggregates are never stored, only computed from the records, so the
two cannot drift apart.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from statistics import fmean

__all__ = ["QueryRecord", "RunReport", "SCHEMA"]

SCHEMA = "fedtraj-report/1"

_AGG_FIELDS = (
    "wall_ms",
    "bytes_up",
    "bytes_down",
    "retention",
    "n_grids",
    "partition_count",
    "n_r",
)


@dataclass(frozen=True)
class QueryRecord:
    """One query's outcome and cost."""

    result_ids: tuple[str, ...]
    wall_ms: float
    bytes_up: int
    bytes_down: int
    retention: float
    n_grids: int
    partition_count: int
    n_r: int


@dataclass(frozen=True)
class RunReport:
    records: tuple[QueryRecord, ...]

    def aggregates(self) -> dict[str, float]:
        """Mean of each numeric field over the batch."""
        if not self.records:
            return {f: 0.0 for f in _AGG_FIELDS}
        return {
            f: fmean(getattr(r, f) for r in self.records) for f in _AGG_FIELDS
        }

    def to_json(self) -> str:
        payload = {
            "schema": SCHEMA,
            "records": [
                {**asdict(r), "result_ids": list(r.result_ids)} for r in self.records
            ],
            "aggregates": self.aggregates(),
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def table(self) -> str:
        """Small fixed-width table for terminal output."""
        head = f"{'#':>3} {'matches':>7} {'wall_ms':>9} {'bytes':>10} {'retent':>7} {'|G_Q|':>5} {'parts':>5} {'n_r':>4}"
        lines = [head, "-" * len(head)]
        for i, r in enumerate(self.records):
            lines.append(
                f"{i:>3} {len(r.result_ids):>7} {r.wall_ms:>9.1f} "
                f"{r.bytes_up + r.bytes_down:>10} {r.retention:>7.3f} "
                f"{r.n_grids:>5} {r.partition_count:>5} {r.n_r:>4}"
            )
        agg = self.aggregates()
        lines.append("-" * len(head))
        lines.append(
            f"{'avg':>3} {'':>7} {agg['wall_ms']:>9.1f} "
            f"{agg['bytes_up'] + agg['bytes_down']:>10.0f} {agg['retention']:>7.3f} "
            f"{agg['n_grids']:>5.1f} {agg['partition_count']:>5.1f} {agg['n_r']:>4.1f}"
        )
        return "\n".join(lines)
