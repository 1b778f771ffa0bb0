"""NDJSON trajectory ingestion.

One record per line: ``{"id": string, "points": [[ts, x, y], ...]}`` with
coordinates already in planar meters. Records that violate the trajectory
invariants are rejected with the offending line number so a bad corpus row
can be found and fixed.

Geographic sources can opt into a fixed equirectangular projection around a
reference latitude; the pipeline itself never sees degrees.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np

from .errors import DomainError, IngestError
from .geometry import Trajectory

__all__ = [
    "load_ndjson",
    "iter_ndjson",
    "dump_ndjson",
    "project_equirectangular",
]

EARTH_RADIUS_M = 6_371_000.0


def project_equirectangular(lon: float, lat: float, ref_lat: float) -> tuple[float, float]:
    """Degrees to planar meters around ``ref_lat``.

    Adequate for city-scale extents; distortion grows with distance from the
    reference latitude.
    """
    x = math.radians(lon) * EARTH_RADIUS_M * math.cos(math.radians(ref_lat))
    y = math.radians(lat) * EARTH_RADIUS_M
    return x, y


def _parse_record(obj, line: int, geographic: bool, ref_lat: float | None) -> Trajectory:
    if not isinstance(obj, dict):
        raise IngestError("record is not a JSON object", line)
    tid = obj.get("id")
    if not isinstance(tid, str) or not tid:
        raise IngestError("missing or non-string 'id'", line)
    pts = obj.get("points")
    if not isinstance(pts, list) or len(pts) < 1:
        raise IngestError(f"trajectory {tid!r}: 'points' must be a non-empty list", line)
    rows = []
    for k, p in enumerate(pts):
        if not isinstance(p, list) or len(p) != 3:
            raise IngestError(f"trajectory {tid!r}: point {k} is not [ts, x, y]", line)
        try:
            ts, x, y = (float(v) for v in p)
        except (TypeError, ValueError):
            raise IngestError(f"trajectory {tid!r}: point {k} has non-numeric fields", line)
        if geographic:
            x, y = project_equirectangular(x, y, ref_lat if ref_lat is not None else y)
        rows.append((ts, x, y))
    try:
        return Trajectory(tid, np.array(rows, dtype=np.float64))
    except DomainError as exc:
        raise IngestError(str(exc), line) from exc


def iter_ndjson(
    path: str | Path,
    geographic: bool = False,
    ref_lat: float | None = None,
) -> Iterator[Trajectory]:
    """Stream trajectories from an NDJSON file, validating as we go."""
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"invalid JSON: {exc.msg}", line_no) from exc
            yield _parse_record(obj, line_no, geographic, ref_lat)


def load_ndjson(
    path: str | Path,
    geographic: bool = False,
    ref_lat: float | None = None,
) -> list[Trajectory]:
    """Read a whole NDJSON corpus into memory."""
    return list(iter_ndjson(path, geographic=geographic, ref_lat=ref_lat))


def dump_ndjson(trajectories: Iterable[Trajectory], path: str | Path | TextIO) -> None:
    """Write trajectories in the ingestion format, one record per line."""
    if hasattr(path, "write"):
        _write_records(trajectories, path)
        return
    with open(path, "w", encoding="utf-8") as fh:
        _write_records(trajectories, fh)


def _write_records(trajectories: Iterable[Trajectory], fh: TextIO) -> None:
    for t in trajectories:
        rec = {"id": t.id, "points": [[float(a), float(b), float(c)] for a, b, c in t.points]}
        fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
