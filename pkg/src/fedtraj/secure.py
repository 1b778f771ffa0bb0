"""Two-party secure verification of trajectory matches.

One session decides whether an owner-held trajectory (or a partition's
reference envelope) matches the client's query points under a threshold,
revealing only the final bit. The arithmetic is specified over fixed-point
integers (1e-3 units for meters and seconds), and the match predicate is the
interpolation test cleared of divisions: a query point q matches segment s
iff q's timestamp falls in s's span and

    || (q - o) * dt - (q.ts - o.ts) * (d - o) ||^2  <=  tau_q^2 * dt^2

with dt = d.ts - o.ts (for dt = 0 the plain distance to the segment origin).
The comparison is exact: a float64 fast path evaluates all pairs, and any
pair whose two sides land within rounding distance of each other is redone
in unbounded integers.

The backend boundary is three primitives (pairwise threshold test with the
time-window conjunction, match-counter accumulation, count-vs-length
equality), so the shipped trusted-evaluator simulation can later be swapped
for a real MPC engine. The simulated evaluator lives with the data owner;
the client's inputs reach it inside session frames the owner relays without
reading, and an auditor can replay a retained transcript to verify byte by
byte that neither party could have read more than the protocol grants.
Every session exchanges the same frames whatever the data says: all segment
pairs are evaluated, with no short-circuit, and the work placeholder frame
is sized by the declared per-comparison cost model.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .errors import DomainError, ProtocolError
from .wire import (
    MsgType,
    SessionFrame,
    SvInput,
    SvOffer,
    SvResult,
    SvWork,
    decode,
    encode,
)
from . import wire

__all__ = [
    "QUANT",
    "CostModel",
    "VerifyRequest",
    "Transcript",
    "TranscriptRecord",
    "SecureBackend",
    "SimulatedIdealBackend",
    "quantize_values",
    "quantize_threshold",
    "match_matrix",
    "op_count",
    "ClientVerifier",
    "OwnerVerifier",
    "secure_verify",
    "meter",
    "audit_leakage",
    "assert_leakage_closure",
    "allowed_fact_kinds",
    "LeakageLedger",
    "ROLE_PRUNE",
    "ROLE_VALIDATE",
]

QUANT = 1000  # fixed-point units per meter / per second

ROLE_PRUNE = "reference-prune"
ROLE_VALIDATE = "final-validate"

_ROLE_TO_TYPE = {
    ROLE_PRUNE: MsgType.PRUNE_SESSION,
    ROLE_VALIDATE: MsgType.VALIDATE_SESSION,
}


@dataclass(frozen=True)
class CostModel:
    """Declared wire cost of the secure computation, bytes per comparison."""

    bytes_per_comparison: int = 64

    def __post_init__(self):
        if self.bytes_per_comparison < 1:
            raise DomainError("bytes_per_comparison must be >= 1")


def quantize_values(arr: np.ndarray) -> np.ndarray:
    """Round coordinates/timestamps to the fixed-point lattice, as int64."""
    return np.rint(np.asarray(arr, dtype=np.float64) * QUANT).astype(np.int64)


def quantize_threshold(tau: float) -> int:
    """Thresholds round up so quantization can only admit, never drop, a
    boundary case; on-lattice values are preserved exactly."""
    if not tau > 0:
        raise DomainError(f"threshold must be > 0, got {tau}")
    return int(math.ceil(round(tau * QUANT, 6)))


def op_count(n_points: int, n_segments: int) -> int:
    """Secure operations in one session: all pairwise tests, one counter
    update per query point, one final equality."""
    return n_points * n_segments + n_points + 1


def _exact_pair(q_row, s_row, tau_q: int) -> bool:
    qt, qx, qy = (int(v) for v in q_row)
    ot, ox, oy, dt, dx, dy = (int(v) for v in s_row)
    if not ot <= qt <= dt:
        return False
    dur = dt - ot
    if dur == 0:
        return (qx - ox) ** 2 + (qy - oy) ** 2 <= tau_q * tau_q
    ax = (qx - ox) * dur - (qt - ot) * (dx - ox)
    ay = (qy - oy) * dur - (qt - ot) * (dy - oy)
    return ax * ax + ay * ay <= tau_q * tau_q * dur * dur


def match_matrix(q: np.ndarray, s: np.ndarray, tau_q: int) -> np.ndarray:
    """Pairwise match bits, (n_points, n_segments), exact over the integers."""
    qt = q[:, 0:1]
    window = (qt >= s[:, 0]) & (qt <= s[:, 3])

    a = (qt - s[:, 0]).astype(np.float64)
    ex = (q[:, 1:2] - s[:, 1]).astype(np.float64)
    ey = (q[:, 2:3] - s[:, 2]).astype(np.float64)
    vx = (s[:, 4] - s[:, 1]).astype(np.float64)
    vy = (s[:, 5] - s[:, 2]).astype(np.float64)
    dur = (s[:, 3] - s[:, 0]).astype(np.float64)

    ax = ex * dur - a * vx
    ay = ey * dur - a * vy
    lhs = ax * ax + ay * ay
    rhs = float(tau_q) ** 2 * dur * dur
    zero = dur == 0.0
    if np.any(zero):
        lhs = np.where(zero, ex * ex + ey * ey, lhs)
        rhs = np.where(zero, float(tau_q) ** 2, rhs)

    out = window & (lhs <= rhs)
    # Pairs the float path cannot separate get the unbounded-integer verdict.
    near = window & (
        np.abs(lhs - rhs) <= 1e-9 * np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1.0)
    )
    if np.any(near):
        for i, j in np.argwhere(near):
            out[i, j] = _exact_pair(q[i], s[j], tau_q)
    return out


class SecureBackend(Protocol):
    """The three secure primitives a verification session consumes."""

    name: str

    def compare_all(self, q: np.ndarray, s: np.ndarray, tau_q: int) -> np.ndarray:
        """Pairwise threshold-with-window bits, (n_points, n_segments)."""
        ...

    def tally(self, per_point: np.ndarray) -> int:
        """Accumulate per-point match bits into a count."""
        ...

    def reveal_equal(self, count: int, n_points: int) -> bool:
        """Open only the predicate count == n_points."""
        ...


class SimulatedIdealBackend:
    """Trusted in-process evaluator computing the primitives in plaintext."""

    name = "simulated-ideal"

    def compare_all(self, q: np.ndarray, s: np.ndarray, tau_q: int) -> np.ndarray:
        return match_matrix(q, s, tau_q)

    def tally(self, per_point: np.ndarray) -> int:
        return int(np.count_nonzero(per_point))

    def reveal_equal(self, count: int, n_points: int) -> bool:
        return count == n_points


@dataclass(frozen=True)
class VerifyRequest:
    """Joint inputs of one verification, as the two parties hold them."""

    role: str
    query_points: np.ndarray  # (n, 3) rows of (ts, x, y), client side
    owner_segments: np.ndarray  # (k, 6) rows of (o_ts, o_x, o_y, d_ts, d_x, d_y)
    tau_eff: float

    def __post_init__(self):
        if self.role not in _ROLE_TO_TYPE:
            raise DomainError(f"unknown verification role {self.role!r}")
        if not self.tau_eff > 0:
            raise DomainError(f"tau_eff must be > 0, got {self.tau_eff}")
        qp = np.asarray(self.query_points, dtype=np.float64)
        sg = np.asarray(self.owner_segments, dtype=np.float64)
        if qp.ndim != 2 or qp.shape[1] != 3 or qp.shape[0] < 1:
            raise DomainError("query_points must be (n >= 1, 3)")
        if sg.ndim != 2 or sg.shape[1] != 6 or sg.shape[0] < 1:
            raise DomainError("owner_segments must be (k >= 1, 6)")
        object.__setattr__(self, "query_points", qp)
        object.__setattr__(self, "owner_segments", sg)


@dataclass(frozen=True)
class TranscriptRecord:
    """One observed message: who to whom, how big, and a payload digest."""

    sender: str
    receiver: str
    kind: str
    n_bytes: int
    digest: str
    on_wire: bool
    payload: bytes | None = None


@dataclass
class Transcript:
    """Ordered record of everything the protocol moved, wire or local.

    ``retain_payloads`` keeps raw bytes for the leakage auditor; metering
    runs (e.g. benchmarks) leave it off and store digests only.
    """

    retain_payloads: bool = False
    records: list[TranscriptRecord] = field(default_factory=list)

    def _add(self, sender, receiver, kind, payload: bytes, on_wire: bool):
        self.records.append(
            TranscriptRecord(
                sender=sender,
                receiver=receiver,
                kind=kind,
                n_bytes=len(payload),
                digest=hashlib.sha256(payload).hexdigest(),
                on_wire=on_wire,
                payload=bytes(payload) if self.retain_payloads else None,
            )
        )

    def record_wire(self, sender: str, receiver: str, kind: str, frame: bytes):
        self._add(sender, receiver, kind, frame, on_wire=True)

    def record_local(self, sender: str, receiver: str, kind: str, payload: bytes):
        self._add(sender, receiver, kind, payload, on_wire=False)

    def meter(self) -> int:
        return sum(r.n_bytes for r in self.records if r.on_wire)


def meter(transcript: Transcript) -> int:
    """Total bytes that crossed the wire: the communication-cost metric."""
    return transcript.meter()


class ClientVerifier:
    """Client half of one session: submits quantized query points, checks
    that the owner's frames have exactly the shape the protocol promises."""

    def __init__(
        self,
        session_id: int,
        role: str,
        query_points: np.ndarray,
        tau_eff: float,
        cost: CostModel,
    ):
        self.session_id = session_id
        self.msg_type = _ROLE_TO_TYPE[role]
        self._q = quantize_values(query_points)
        self._tau_q = quantize_threshold(tau_eff)
        self._cost = cost
        self._n_segments: int | None = None
        self.result: bool | None = None

    def on_offer(self, sv: SvOffer) -> bytes:
        """Answer the owner's session opening with our input frame."""
        if sv.session_id != self.session_id:
            raise ProtocolError(f"offer for session {sv.session_id}, expected {self.session_id}")
        if sv.n_segments < 1:
            raise ProtocolError("offered session has no segments")
        self._n_segments = sv.n_segments
        blob = self._q.astype("<i8").tobytes()
        return encode(
            SessionFrame(
                self.msg_type,
                SvInput(self.session_id, self._q.shape[0], self._tau_q, blob),
            )
        )

    @property
    def comparisons(self) -> int:
        """Point-segment pairs this session compares; known after the offer."""
        return self._q.shape[0] * (self._n_segments or 0)

    def on_work(self, sv: SvWork) -> None:
        if self._n_segments is None:
            raise ProtocolError("work frame before session offer")
        expected = op_count(self._q.shape[0], self._n_segments)
        if sv.n_ops != expected:
            raise ProtocolError(
                f"owner claims {sv.n_ops} secure ops, protocol requires {expected}"
            )
        if len(sv.padding) != expected * self._cost.bytes_per_comparison:
            raise ProtocolError("work frame size disagrees with the cost model")

    def on_result(self, sv: SvResult) -> bool:
        self.result = sv.match
        return sv.match


class OwnerVerifier:
    """Owner half of one session: opens it, relays the client's blob to the
    evaluator, and returns the work and result frames."""

    def __init__(
        self,
        session_id: int,
        role: str,
        segments: np.ndarray,
        tau_eff: float,
        cost: CostModel,
        backend: SecureBackend,
        transcript: Transcript,
    ):
        self.session_id = session_id
        self.msg_type = _ROLE_TO_TYPE[role]
        self._segments = np.asarray(segments, dtype=np.float64)
        self._s = quantize_values(self._segments)
        self._tau_q = quantize_threshold(tau_eff)
        self._cost = cost
        self._backend = backend
        self._transcript = transcript
        self.result: bool | None = None

    def offer(self) -> bytes:
        return encode(
            SessionFrame(self.msg_type, SvOffer(self.session_id, self._s.shape[0]))
        )

    def on_input(self, sv: SvInput) -> list[bytes]:
        if sv.session_id != self.session_id:
            raise ProtocolError(f"input for session {sv.session_id}, expected {self.session_id}")
        if sv.tau_q != self._tau_q:
            raise ProtocolError(
                f"threshold disagreement: client {sv.tau_q}, owner {self._tau_q}"
            )
        if len(sv.blob) != sv.n_points * 24:
            raise ProtocolError(
                f"input blob holds {len(sv.blob)} bytes for {sv.n_points} declared points"
            )
        q = np.frombuffer(sv.blob, dtype="<i8").reshape(sv.n_points, 3)

        # The owner's private input goes to the evaluator in-process.
        own_blob = self._s.astype("<i8").tobytes()
        self._transcript.record_local("owner", "evaluator", "SvOwnerInput", own_blob)

        bits = self._backend.compare_all(q, self._s, self._tau_q)
        per_point = bits.any(axis=1)
        count = self._backend.tally(per_point)
        bit = self._backend.reveal_equal(count, sv.n_points)
        self.result = bit
        self._transcript.record_local(
            "evaluator", "owner", "SvResult", bytes([int(bit)])
        )

        n_ops = op_count(sv.n_points, self._s.shape[0])
        work = SvWork(self.session_id, n_ops, bytes(n_ops * self._cost.bytes_per_comparison))
        result = SvResult(self.session_id, bit)
        return [
            encode(SessionFrame(self.msg_type, work)),
            encode(SessionFrame(self.msg_type, result)),
        ]


def secure_verify(
    req: VerifyRequest,
    backend: SecureBackend,
    cost: CostModel = CostModel(),
    transcript: Transcript | None = None,
) -> tuple[bool, Transcript]:
    """Run both halves of one session over an in-memory wire.

    The frames exchanged are byte-identical to what the federation protocol
    puts on a socket, so the transcript meters real traffic.
    """
    t = transcript if transcript is not None else Transcript(retain_payloads=True)
    owner = OwnerVerifier(0, req.role, req.owner_segments, req.tau_eff, cost, backend, t)
    client = ClientVerifier(0, req.role, req.query_points, req.tau_eff, cost)

    def ship(frame: bytes, sender: str, receiver: str) -> SessionFrame:
        msg = decode(frame)
        assert isinstance(msg, SessionFrame)
        t.record_wire(sender, receiver, type(msg.sv).__name__, frame)
        return msg

    offer = ship(owner.offer(), "owner", "client")
    inp = ship(client.on_offer(offer.sv), "client", "owner")
    work_frame, result_frame = owner.on_input(inp.sv)
    client.on_work(ship(work_frame, "owner", "client").sv)
    bit = client.on_result(ship(result_frame, "owner", "client").sv)
    return bit, t


# ---------------------------------------------------------------------------
# Leakage audit


@dataclass
class LeakageLedger:
    """Plaintext facts each party could have learned, rebuilt from raw frames."""

    owner: set = field(default_factory=set)
    client: set = field(default_factory=set)
    evaluator: set = field(default_factory=set)

    def facts(self, party: str) -> set:
        return getattr(self, party)


def audit_leakage(transcript: Transcript) -> LeakageLedger:
    """Re-parse a retained transcript and rebuild each party's ledger.

    Raises ProtocolError if any frame smuggles bytes the schema does not
    account for: non-zero work padding, an input blob disagreeing with its
    declared point count, or an undecodable frame. Sub-protocol payloads
    addressed to the evaluator are credited to the evaluator, not to the
    owner who relayed them.
    """
    ledger = LeakageLedger()
    for rec in transcript.records:
        if rec.payload is None:
            raise ProtocolError(
                "transcript was not recorded with retain_payloads; cannot audit"
            )
        if not rec.on_wire:
            ledger.facts(rec.receiver).add((rec.kind, rec.digest))
            continue
        msg = decode(rec.payload)
        facts = ledger.facts(rec.receiver)
        if isinstance(msg, wire.Hello):
            facts.add(("tessellation", msg.origin_x, msg.origin_y, msg.cell_side))
            facts.add(("tau", msg.tau))
            facts.add(("mode", msg.mode))
        elif isinstance(msg, wire.HelloAck):
            facts.add(("db_size", msg.db_size))
        elif isinstance(msg, wire.PublishGrids):
            facts.add(("tau", msg.tau))
            facts.add(("cell_side", msg.cell_side))
            for g in msg.grids:
                facts.add(("grid", g.ix, g.iy))
        elif isinstance(msg, wire.FilterStats):
            facts.add(("candidate_count", msg.candidate_count))
            facts.add(("partition_count", msg.partition_count))
        elif isinstance(msg, SessionFrame):
            role = "prune" if msg.msg_type == MsgType.PRUNE_SESSION else "validate"
            sv = msg.sv
            if isinstance(sv, SvOffer):
                facts.add(("session_segments", role, sv.session_id, sv.n_segments))
            elif isinstance(sv, SvInput):
                if len(sv.blob) != sv.n_points * 24:
                    raise ProtocolError("input blob length disagrees with point count")
                facts.add(("session_points", role, sv.session_id, sv.n_points))
                facts.add(("session_tau", role, sv.session_id, sv.tau_q))
                ledger.evaluator.add(
                    ("query_blob", role, sv.session_id, hashlib.sha256(sv.blob).hexdigest())
                )
            elif isinstance(sv, SvWork):
                if any(sv.padding):
                    raise ProtocolError("work padding carries non-zero bytes")
                facts.add(("session_ops", role, sv.session_id, sv.n_ops))
            elif isinstance(sv, SvResult):
                facts.add(("match_bit", role, sv.session_id, sv.match))
        elif isinstance(msg, wire.ResultSet):
            for tid in msg.matched_ids:
                facts.add(("result_id", tid))
        elif isinstance(msg, wire.Error):
            facts.add(("error", msg.code, msg.text))
        else:  # pragma: no cover - decode() cannot produce other types
            raise ProtocolError(f"unexpected message {type(msg).__name__}")
    return ledger


def allowed_fact_kinds() -> dict[str, frozenset]:
    """Fact kinds each party is entitled to; the audit's closure baseline."""
    return {
        "owner": frozenset(
            {
                "tessellation", "tau", "cell_side", "mode", "grid",
                "session_points", "session_tau", "SvOwnerInput", "SvResult",
            }
        ),
        "client": frozenset(
            {
                "db_size", "candidate_count", "partition_count",
                "session_segments", "session_ops", "match_bit",
                "result_id", "error",
            }
        ),
        "evaluator": frozenset({"query_blob", "SvOwnerInput", "SvResult"}),
    }


def assert_leakage_closure(transcript: Transcript) -> LeakageLedger:
    """Audit a transcript and enforce the fact-kind closure for every party."""
    ledger = audit_leakage(transcript)
    allowed = allowed_fact_kinds()
    for party in ("owner", "client", "evaluator"):
        seen = {f[0] for f in ledger.facts(party)}
        extra = seen - allowed[party]
        if extra:
            raise ProtocolError(f"{party} learned facts outside its entitlement: {sorted(extra)}")
    return ledger
