"""Uniform square tessellation and the inverted grid index.

A trajectory's traversal grids are the cells whose squares come within tau of
any of its segments, i.e. the rasterization of the tau-sausage around the
polyline. Cells exactly tangent to the sausage boundary count as covered.

Rasterization is exact rather than sampled: candidate cells come from a
supercover walk of each segment expanded by a ring of ceil(tau/L) cells, and
a candidate survives iff the true segment-to-square distance is <= tau. The
ring radius is sufficient because a covered cell is within tau of some point
p of the segment, and the cell holding p is at most ceil(tau/L) cells away
in either axis.

The index maps each cell to the sorted ids of trajectories covering it and
can be persisted to a small binary file (see ``persist_index``).
"""

from __future__ import annotations

import struct
import zlib
from bisect import bisect_left
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    IndexChecksumError,
    IndexFormatError,
    IndexTruncatedError,
    IndexVersionError,
    IngestError,
    ProtocolError,
)
from .geometry import Trajectory

__all__ = [
    "GridId",
    "GridSpec",
    "GridIndex",
    "traversal_grids",
    "segment_box_distance2",
    "build_index",
    "persist_index",
    "load_index",
]

INDEX_MAGIC = b"FTMI"
INDEX_VERSION = 1


class GridId(NamedTuple):
    """Cell address: column and row index relative to the grid origin."""

    ix: int
    iy: int


@dataclass(frozen=True)
class GridSpec:
    """Tessellation shared by client and owners: origin corner and cell side."""

    origin_x: float
    origin_y: float
    cell_side: float

    def __post_init__(self):
        if not self.cell_side > 0:
            raise ConfigurationError(f"cell side must be > 0, got {self.cell_side}")

    def cell(self, x: float, y: float) -> GridId:
        """Cell containing (x, y); points on shared edges go to the upper cell."""
        return GridId(
            int(np.floor((x - self.origin_x) / self.cell_side)),
            int(np.floor((y - self.origin_y) / self.cell_side)),
        )

    def cells(self, xy: np.ndarray) -> np.ndarray:
        """Vectorized cell lookup for an (n, 2) array; returns (n, 2) int64."""
        shifted = np.asarray(xy, dtype=np.float64) - (self.origin_x, self.origin_y)
        return np.floor(shifted / self.cell_side).astype(np.int64)

    def box(self, g: GridId) -> tuple[float, float, float, float]:
        """Corners (x0, y0, x1, y1) of the cell's square."""
        x0 = self.origin_x + g.ix * self.cell_side
        y0 = self.origin_y + g.iy * self.cell_side
        return x0, y0, x0 + self.cell_side, y0 + self.cell_side


def _supercover(spec: GridSpec, ox: float, oy: float, dx: float, dy: float) -> list[GridId]:
    """Cells touched by the segment, walked one axis step at a time.

    Visits a superset of the floor-cells of every point on the segment; corner
    crossings step x before y, which can add a harmless extra neighbor.
    """
    L = spec.cell_side
    ix, iy = spec.cell(ox, oy)
    jx, jy = spec.cell(dx, dy)
    out = [GridId(ix, iy)]
    if (ix, iy) == (jx, jy):
        return out

    vx, vy = dx - ox, dy - oy
    sx = 1 if jx > ix else -1
    sy = 1 if jy > iy else -1
    # Parameter t at which the walk next crosses a vertical / horizontal line.
    if jx != ix:
        edge = spec.origin_x + (ix + (sx > 0)) * L
        t_x, dt_x = (edge - ox) / vx, abs(L / vx)
    else:
        t_x, dt_x = np.inf, np.inf
    if jy != iy:
        edge = spec.origin_y + (iy + (sy > 0)) * L
        t_y, dt_y = (edge - oy) / vy, abs(L / vy)
    else:
        t_y, dt_y = np.inf, np.inf

    for _ in range(abs(jx - ix) + abs(jy - iy)):
        if t_x <= t_y:
            ix += sx
            t_x += dt_x
        else:
            iy += sy
            t_y += dt_y
        out.append(GridId(ix, iy))
    if out[-1] != (jx, jy):  # float drift on the last crossing; finish the walk
        out.append(GridId(jx, jy))
    return out


def _point_seg_d2(px, py, ax, ay, bx, by):
    """Squared distance from points (px, py) to segments (a, b), broadcasted."""
    ux, uy = bx - ax, by - ay
    den = ux * ux + uy * uy
    t = ((px - ax) * ux + (py - ay) * uy) / np.where(den > 0, den, 1.0)
    t = np.minimum(np.maximum(np.where(den > 0, t, 0.0), 0.0), 1.0)
    ex, ey = px - (ax + t * ux), py - (ay + t * uy)
    return ex * ex + ey * ey


def segment_box_distance2(ox, oy, dx, dy, bx0, by0, bx1, by1) -> np.ndarray:
    """Squared distance between segments and axis-aligned boxes, broadcasted."""
    ox, oy, dx, dy, bx0, by0, bx1, by1 = np.broadcast_arrays(
        *(np.asarray(a, dtype=np.float64) for a in (ox, oy, dx, dy, bx0, by0, bx1, by1))
    )
    vx, vy = dx - ox, dy - oy

    # Liang-Barsky feasibility: does o + t*v meet the box for some t in [0,1]?
    t0 = np.zeros(ox.shape)
    t1 = np.ones(ox.shape)
    feasible = np.ones(ox.shape, dtype=bool)
    for p, q in ((-vx, ox - bx0), (vx, bx1 - ox), (-vy, oy - by0), (vy, by1 - oy)):
        still = p == 0
        feasible &= ~still | (q >= 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = q / p
        t0 = np.where(~still & (p < 0), np.maximum(t0, r), t0)
        t1 = np.where(~still & (p > 0), np.minimum(t1, r), t1)
    hit = feasible & (t0 <= t1)

    d2 = np.where(hit, 0.0, np.inf)
    miss = ~hit
    if np.any(miss):
        sox, soy, sdx, sdy = ox[miss], oy[miss], dx[miss], dy[miss]
        x0, y0, x1, y1 = bx0[miss], by0[miss], bx1[miss], by1[miss]
        # Disjoint convex shapes: the closest pair involves a vertex, so box
        # corners against the segment plus segment endpoints against the box
        # cover every case.
        best = np.full(x0.shape, np.inf)
        for cx, cy in ((x0, y0), (x1, y0), (x0, y1), (x1, y1)):
            best = np.minimum(best, _point_seg_d2(cx, cy, sox, soy, sdx, sdy))
        for px, py in ((sox, soy), (sdx, sdy)):
            ex = np.maximum(np.maximum(x0 - px, px - x1), 0.0)
            ey = np.maximum(np.maximum(y0 - py, py - y1), 0.0)
            best = np.minimum(best, ex * ex + ey * ey)
        d2[miss] = best
    return d2


def traversal_grids(t: Trajectory, tau: float, spec: GridSpec) -> set[GridId]:
    """All cells whose square is within tau of some segment of t (tangency included)."""
    if not tau > 0:
        raise ConfigurationError(f"tau must be > 0, got {tau}")
    L = spec.cell_side
    ring = int(np.ceil(tau / L))
    offsets = [(a, b) for a in range(-ring, ring + 1) for b in range(-ring, ring + 1)]
    tau2 = tau * tau

    seg = t.segment_array()
    crossed: list[list[GridId]] = [
        _supercover(spec, float(r[1]), float(r[2]), float(r[4]), float(r[5])) for r in seg
    ]
    covered: set[GridId] = set().union(*crossed)

    # Any cell within tau of segment s sits within the Chebyshev ring of one
    # of s's crossed cells, so (segment, ring cell) pairs cover everything;
    # one vectorized distance pass settles them all.
    pairs = {
        (i, ix + a, iy + b)
        for i, cells in enumerate(crossed)
        for ix, iy in cells
        for a, b in offsets
        if (ix + a, iy + b) not in covered
    }
    if pairs:
        arr = np.array(sorted(pairs), dtype=np.int64)
        si = arr[:, 0]
        bx0 = spec.origin_x + arr[:, 1] * L
        by0 = spec.origin_y + arr[:, 2] * L
        d2 = segment_box_distance2(
            seg[si, 1], seg[si, 2], seg[si, 4], seg[si, 5], bx0, by0, bx0 + L, by0 + L
        )
        covered.update(GridId(int(a), int(b)) for a, b in arr[d2 <= tau2, 1:])
    return covered


@dataclass(frozen=True)
class GridIndex:
    """Inverted index from cell to the sorted ids of trajectories covering it."""

    spec: GridSpec
    tau: float
    entries: Mapping[GridId, tuple[str, ...]]

    def filter(self, query_grids: Iterable[GridId]) -> list[str]:
        """Ids present in every queried cell, ascending.

        An empty query set has no filtering semantics and is refused.
        """
        grids = list(query_grids)
        if not grids:
            raise ProtocolError("cannot filter on an empty grid set")
        postings = []
        for g in grids:
            p = self.entries.get(GridId(*g))
            if not p:
                return []
            postings.append(p)
        postings.sort(key=len)
        result = postings[0]
        for p in postings[1:]:
            result = [tid for tid in result if _contains_sorted(p, tid)]
            if not result:
                break
        return list(result)


def _contains_sorted(seq: Sequence[str], item: str) -> bool:
    i = bisect_left(seq, item)
    return i < len(seq) and seq[i] == item


def build_index(
    trajectories: Iterable[Trajectory], tau: float, spec: GridSpec
) -> GridIndex:
    """Offline index build; every trajectory id must be unique."""
    entries: dict[GridId, list[str]] = {}
    seen: set[str] = set()
    for t in trajectories:
        if t.id in seen:
            raise IngestError(f"duplicate trajectory id {t.id!r}")
        seen.add(t.id)
        for g in traversal_grids(t, tau, spec):
            entries.setdefault(g, []).append(t.id)
    frozen = {g: tuple(sorted(ids)) for g, ids in entries.items()}
    return GridIndex(spec=spec, tau=tau, entries=frozen)


# ---------------------------------------------------------------------------
# Persistence. Layout after the 6-byte preamble (magic + u16 version):
#   f64 origin_x, origin_y, cell_side, tau
#   u32 id-table size, then (u16 length, utf-8 bytes) per id, sorted
#   u32 entry count, then per entry: i64 ix, i64 iy, u32 posting length,
#     posting as delta-encoded varints over id-table positions
#   u32 CRC32 of everything between the preamble and the checksum


def _write_varint(buf: bytearray, v: int) -> None:
    while True:
        b = v & 0x7F
        v >>= 7
        if v:
            buf.append(b | 0x80)
        else:
            buf.append(b)
            return


class _Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise IndexTruncatedError(
                f"file ends {self.pos + n - len(self.data)} bytes short"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def varint(self) -> int:
        v, shift = 0, 0
        while True:
            (b,) = self.take(1)
            v |= (b & 0x7F) << shift
            if not b & 0x80:
                return v
            shift += 7


def persist_index(index: GridIndex, path) -> None:
    """Write the index to path in the FTMI binary format."""
    ids = sorted({tid for p in index.entries.values() for tid in p})
    pos = {tid: i for i, tid in enumerate(ids)}

    body = bytearray()
    body += struct.pack(
        "<dddd",
        index.spec.origin_x,
        index.spec.origin_y,
        index.spec.cell_side,
        index.tau,
    )
    body += struct.pack("<I", len(ids))
    for tid in ids:
        raw = tid.encode("utf-8")
        body += struct.pack("<H", len(raw))
        body += raw
    body += struct.pack("<I", len(index.entries))
    for g in sorted(index.entries):
        posting = index.entries[g]
        body += struct.pack("<qqI", g.ix, g.iy, len(posting))
        prev = 0
        for tid in posting:  # already ascending, so deltas are non-negative
            cur = pos[tid]
            _write_varint(body, cur - prev)
            prev = cur

    with open(path, "wb") as f:
        f.write(INDEX_MAGIC)
        f.write(struct.pack("<H", INDEX_VERSION))
        f.write(body)
        f.write(struct.pack("<I", zlib.crc32(body)))


def load_index(path) -> GridIndex:
    """Read an index persisted by ``persist_index``, verifying the checksum."""
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data)
    magic = r.take(4)
    if magic != INDEX_MAGIC:
        raise IndexFormatError(f"bad magic {magic!r}")
    (version,) = r.unpack("<H")
    if version != INDEX_VERSION:
        raise IndexVersionError(f"unsupported index version {version}")
    if len(data) < r.pos + 4:
        raise IndexTruncatedError("missing checksum")
    body = data[r.pos : -4]
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise IndexChecksumError("index body does not match its checksum")

    r = _Reader(body)  # checksum bytes must not be readable as content
    ox, oy, side, tau = r.unpack("<dddd")
    (n_ids,) = r.unpack("<I")
    ids = []
    for _ in range(n_ids):
        (ln,) = r.unpack("<H")
        ids.append(r.take(ln).decode("utf-8"))
    (n_entries,) = r.unpack("<I")
    entries: dict[GridId, tuple[str, ...]] = {}
    for _ in range(n_entries):
        ix, iy, count = r.unpack("<qqI")
        cur, posting = 0, []
        for _ in range(count):
            cur += r.varint()
            posting.append(ids[cur])
        entries[GridId(ix, iy)] = tuple(posting)
    return GridIndex(spec=GridSpec(ox, oy, side), tau=tau, entries=entries)
