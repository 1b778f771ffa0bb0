"""Data-owner server and the query client's federation driver.

One query is one connection and a strict request/response dance:

    client                           owner
    Hello  ----------------------->  (tessellation check)
           <-----------------------  HelloAck{db size}
    PublishGrids{cells, tau, L} -->  filter, partition
           <-----------------------  FilterStats{|TC|, partitions}
           <-----------------------  SvOffer           one prune session
    SvInput ---------------------->                    per partition, then
           <-----------------------  SvWork, SvResult  one validate session
    ...                              ...               per surviving member
           <-----------------------  ResultSet{matched ids}

In naive mode the owner skips filtering and pruning and opens a validate
session for every trajectory it holds; the result set must come out the
same, which is what makes efficiency comparisons meaningful.

Both ends record every frame in a transcript, so byte meters can be checked
against what actually crossed the socket, and the secure-session auditor can
replay a retained transcript offline.
"""

from __future__ import annotations

import socket
import socketserver
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    FedTrajError,
    PartialResultError,
    ProtocolError,
    TransportError,
)
from .config import OwnerConfig
from .geometry import Trajectory
from .grid import GridIndex, build_index, load_index, persist_index
from .ingest import load_ndjson
from .partition import (
    grid_visits,
    partition_candidates,
    prune_threshold,
    reference_trajectory,
)
from .publish import PublishedQuery
from .secure import (
    ClientVerifier,
    CostModel,
    OwnerVerifier,
    ROLE_PRUNE,
    ROLE_VALIDATE,
    SimulatedIdealBackend,
    Transcript,
)
from . import wire
from .wire import (
    Error,
    FilterStats,
    Hello,
    HelloAck,
    MsgType,
    PublishGrids,
    ResultSet,
    SessionFrame,
    SvInput,
    SvResult,
    SvWork,
    decode,
    encode,
    read_frame,
)

__all__ = [
    "OwnerState",
    "OwnerServer",
    "QueryMetrics",
    "QueryResult",
    "FederationResult",
    "prepare_owner",
    "serve",
    "run_query",
    "query_federation",
]

ERR_TESSELLATION = 1
ERR_PROTOCOL = 2
ERR_MALFORMED = 3
ERR_INTERNAL = 4

_SOCKET_TIMEOUT = 60.0


def _kind(msg) -> str:
    if isinstance(msg, SessionFrame):
        return type(msg.sv).__name__
    return type(msg).__name__


class _Peer:
    """One end of a connection: framed sends/receives, everything recorded."""

    def __init__(self, sock: socket.socket, me: str, other: str, transcript: Transcript):
        self.sock = sock
        # Sessions are chatty; without this, delayed ACKs dominate wall time.
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.reader = sock.makefile("rb")
        self.me = me
        self.other = other
        self.transcript = transcript

    def send(self, msg) -> None:
        frame = encode(msg)
        self.transcript.record_wire(self.me, self.other, _kind(msg), frame)
        self.sock.sendall(frame)

    def send_raw(self, frame: bytes) -> None:
        msg = decode(frame)
        self.transcript.record_wire(self.me, self.other, _kind(msg), frame)
        self.sock.sendall(frame)

    def recv(self):
        frame = read_frame(self.reader)
        msg = decode(frame)
        self.transcript.record_wire(self.other, self.me, _kind(msg), frame)
        return msg

    def close(self):
        try:
            self.reader.close()
        finally:
            self.sock.close()


@dataclass(frozen=True)
class OwnerState:
    """Immutable per-process owner data: the database and its index."""

    config: OwnerConfig
    trajectories: dict[str, Trajectory]
    index: GridIndex


def prepare_owner(config: OwnerConfig, rebuild_index: bool = False) -> OwnerState:
    """Load the database and load or build the index it will serve from."""
    trajectories = {}
    for t in load_ndjson(config.database):
        trajectories[t.id] = t

    if rebuild_index or not config.index.exists():
        index = build_index(trajectories.values(), config.tau, config.spec)
        persist_index(index, config.index)
    else:
        index = load_index(config.index)
        if index.spec != config.spec or index.tau != config.tau:
            raise ConfigurationError(
                f"index {config.index} was built for spec={index.spec} tau={index.tau}, "
                f"config wants spec={config.spec} tau={config.tau}"
            )
    return OwnerState(config=config, trajectories=trajectories, index=index)


def _owner_handle(state: OwnerState, peer: _Peer) -> None:
    cfg = state.config
    spec, tau = cfg.spec, cfg.tau
    backend = SimulatedIdealBackend()

    hello = peer.recv()
    if not isinstance(hello, Hello):
        raise ProtocolError(f"expected Hello, got {_kind(hello)}", code=ERR_PROTOCOL)
    if (
        hello.origin_x != spec.origin_x
        or hello.origin_y != spec.origin_y
        or hello.cell_side != spec.cell_side
        or hello.tau != tau
    ):
        raise ProtocolError(
            f"tessellation disagreement: client announced "
            f"(origin=({hello.origin_x}, {hello.origin_y}), L={hello.cell_side}, "
            f"tau={hello.tau})",
            code=ERR_TESSELLATION,
        )
    if hello.mode not in (wire.MODE_FILTERED, wire.MODE_NAIVE):
        raise ProtocolError(f"unknown mode {hello.mode}", code=ERR_PROTOCOL)
    peer.send(HelloAck(db_size=len(state.trajectories)))

    pub = peer.recv()
    if not isinstance(pub, PublishGrids):
        raise ProtocolError(f"expected PublishGrids, got {_kind(pub)}", code=ERR_PROTOCOL)
    if pub.tau != tau or pub.cell_side != spec.cell_side:
        raise ProtocolError("published thresholds disagree with handshake", code=ERR_PROTOCOL)

    if hello.mode == wire.MODE_NAIVE:
        tc_ids = sorted(state.trajectories)
        partitions = []
        peer.send(FilterStats(candidate_count=len(tc_ids), partition_count=0))
        survivors = tc_ids
    else:
        if not pub.grids:
            raise ProtocolError("empty grid set has no filtering semantics", code=ERR_PROTOCOL)
        tc_ids = state.index.filter(pub.grids)
        if tc_ids:
            tau_prune = prune_threshold(tau, spec.cell_side)
            visits = {
                tid: grid_visits(state.trajectories[tid], pub.grids, tau, spec)
                for tid in tc_ids
            }
            partitions = partition_candidates(tc_ids, pub.grids, visits, cfg.partition)
        else:
            partitions = []
        peer.send(FilterStats(candidate_count=len(tc_ids), partition_count=len(partitions)))

        survivors = []
        sid = 0
        for part in partitions:
            rt = reference_trajectory(part, pub.grids, visits)
            bit = _owner_session(
                peer, sid, ROLE_PRUNE, rt.segment_array(), tau_prune, cfg.cost, backend
            )
            if bit:
                survivors.extend(part.members)
            sid += 1

    matched = []
    sid = len(partitions)
    for tid in survivors:
        bit = _owner_session(
            peer,
            sid,
            ROLE_VALIDATE,
            state.trajectories[tid].segment_array(),
            tau,
            cfg.cost,
            backend,
        )
        if bit:
            matched.append(tid)
        sid += 1

    peer.send(ResultSet(matched_ids=tuple(sorted(matched))))


def _owner_session(
    peer: _Peer,
    sid: int,
    role: str,
    segments: np.ndarray,
    tau_eff: float,
    cost: CostModel,
    backend,
) -> bool:
    owner = OwnerVerifier(sid, role, segments, tau_eff, cost, backend, peer.transcript)
    peer.send_raw(owner.offer())
    reply = peer.recv()
    if not (isinstance(reply, SessionFrame) and isinstance(reply.sv, SvInput)):
        raise ProtocolError(f"expected session input, got {_kind(reply)}", code=ERR_PROTOCOL)
    if reply.msg_type != owner.msg_type:
        raise ProtocolError("session input arrived under the wrong session role", code=ERR_PROTOCOL)
    for frame in owner.on_input(reply.sv):
        peer.send_raw(frame)
    assert owner.result is not None
    return owner.result


class OwnerServer:
    """Threaded TCP server for one data owner.

    ``retain_transcripts`` keeps each connection's transcript (with payloads)
    for offline auditing; leave it off for long benchmark runs.
    """

    def __init__(self, state: OwnerState, retain_transcripts: bool = False):
        self.state = state
        self.retain_transcripts = retain_transcripts
        self.transcripts: list[Transcript] = []
        self._lock = threading.Lock()
        outer = self

        class _Handler(socketserver.BaseRequestHandler):
            def handle(self):
                outer._handle(self.request)

        host, port = state.config.listen
        self._server = socketserver.ThreadingTCPServer((host, port), _Handler, bind_and_activate=False)
        self._server.allow_reuse_address = True
        self._server.daemon_threads = True
        self._server.server_bind()
        self._server.server_activate()
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def _handle(self, sock: socket.socket) -> None:
        sock.settimeout(_SOCKET_TIMEOUT)
        transcript = Transcript(retain_payloads=self.retain_transcripts)
        peer = _Peer(sock, me="owner", other="client", transcript=transcript)
        try:
            _owner_handle(self.state, peer)
        except ProtocolError as e:
            _try_send(peer, Error(code=e.code, text=str(e)))
        except TransportError as e:
            _try_send(peer, Error(code=ERR_MALFORMED, text=str(e)))
        except FedTrajError as e:
            _try_send(peer, Error(code=ERR_INTERNAL, text=str(e)))
        finally:
            if self.retain_transcripts:
                with self._lock:
                    self.transcripts.append(transcript)
            peer.close()

    def start(self) -> "OwnerServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "OwnerServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.shutdown()

    def serve_forever(self) -> None:
        self._server.serve_forever()


def _try_send(peer: _Peer, msg) -> None:
    try:
        peer.send(msg)
    except OSError:
        pass


def serve(config: OwnerConfig, rebuild_index: bool = False) -> None:
    """Blocking entrypoint: prepare the owner and serve until interrupted."""
    state = prepare_owner(config, rebuild_index=rebuild_index)
    OwnerServer(state).serve_forever()


@dataclass(frozen=True)
class QueryMetrics:
    """Per-owner accounting for one query."""

    wall_ms: float
    bytes_up: int
    bytes_down: int
    db_size: int
    candidate_count: int
    partition_count: int
    n_r: int  # partitions surviving the prune stage
    n_validate: int
    n_grids: int
    comparisons: int  # point-segment pairs across every secure session

    @property
    def bytes_total(self) -> int:
        return self.bytes_up + self.bytes_down

    @property
    def retention(self) -> float:
        return self.candidate_count / self.db_size if self.db_size else 0.0


@dataclass(frozen=True)
class QueryResult:
    matched_ids: tuple[str, ...]
    metrics: QueryMetrics
    transcript: Transcript


def run_query(
    address: tuple[str, int],
    t_q: Trajectory,
    spec,
    tau: float,
    mode: int = wire.MODE_FILTERED,
    published: PublishedQuery | None = None,
    cost: CostModel = CostModel(),
    retain_payloads: bool = False,
    timeout: float = _SOCKET_TIMEOUT,
) -> QueryResult:
    """Run one query against one owner and account every byte."""
    if mode == wire.MODE_FILTERED:
        if published is None:
            raise ConfigurationError("filtered mode needs a published query")
        grids = published.grids
        prune_points = published.points.points
    else:
        grids = ()
        prune_points = None

    t0 = time.perf_counter()
    transcript = Transcript(retain_payloads=retain_payloads)
    sock = socket.create_connection(address, timeout=timeout)
    peer = _Peer(sock, me="client", other="owner", transcript=transcript)
    try:
        peer.send(
            Hello(
                origin_x=spec.origin_x,
                origin_y=spec.origin_y,
                cell_side=spec.cell_side,
                tau=tau,
                mode=mode,
            )
        )
        ack = _expect(peer.recv(), HelloAck)
        peer.send(PublishGrids(tau=tau, cell_side=spec.cell_side, grids=tuple(grids)))
        stats = _expect(peer.recv(), FilterStats)

        tau_prune = prune_threshold(tau, spec.cell_side) if mode == wire.MODE_FILTERED else None
        verifier: ClientVerifier | None = None
        n_r = 0
        n_validate = 0
        comparisons = 0
        matched: tuple[str, ...] | None = None
        while matched is None:
            msg = peer.recv()
            if isinstance(msg, wire.Error):
                raise ProtocolError(f"owner refused: {msg.text}", code=msg.code)
            if isinstance(msg, ResultSet):
                matched = msg.matched_ids
            elif isinstance(msg, SessionFrame):
                sv = msg.sv
                if isinstance(sv, wire.SvOffer):
                    if msg.msg_type == MsgType.PRUNE_SESSION:
                        if prune_points is None or tau_prune is None:
                            raise ProtocolError("owner opened a prune session in naive mode")
                        verifier = ClientVerifier(
                            sv.session_id, ROLE_PRUNE, prune_points, tau_prune, cost
                        )
                    else:
                        n_validate += 1
                        verifier = ClientVerifier(
                            sv.session_id, ROLE_VALIDATE, t_q.points, tau, cost
                        )
                    peer.send_raw(verifier.on_offer(sv))
                elif isinstance(sv, SvWork):
                    if verifier is None:
                        raise ProtocolError("work frame outside a session")
                    verifier.on_work(sv)
                    comparisons += verifier.comparisons
                elif isinstance(sv, SvResult):
                    if verifier is None:
                        raise ProtocolError("result frame outside a session")
                    bit = verifier.on_result(sv)
                    if msg.msg_type == MsgType.PRUNE_SESSION and bit:
                        n_r += 1
                    verifier = None
                else:
                    raise ProtocolError(f"unexpected session message {_kind(msg)}")
            else:
                raise ProtocolError(f"unexpected message {_kind(msg)}")
    finally:
        peer.close()

    wall_ms = (time.perf_counter() - t0) * 1e3
    bytes_up = sum(r.n_bytes for r in transcript.records if r.on_wire and r.sender == "client")
    bytes_down = sum(r.n_bytes for r in transcript.records if r.on_wire and r.sender == "owner")
    metrics = QueryMetrics(
        wall_ms=wall_ms,
        bytes_up=bytes_up,
        bytes_down=bytes_down,
        db_size=ack.db_size,
        candidate_count=stats.candidate_count,
        partition_count=stats.partition_count,
        n_r=n_r,
        n_validate=n_validate,
        n_grids=len(grids),
        comparisons=comparisons,
    )
    return QueryResult(matched_ids=matched, metrics=metrics, transcript=transcript)


def _expect(msg, cls):
    if isinstance(msg, wire.Error):
        raise ProtocolError(f"owner refused: {msg.text}", code=msg.code)
    if not isinstance(msg, cls):
        raise ProtocolError(f"expected {cls.__name__}, got {_kind(msg)}")
    return msg


@dataclass(frozen=True)
class FederationResult:
    """Union result over all owners plus per-owner accounting."""

    matched_ids: tuple[str, ...]
    per_owner: dict[str, QueryResult]
    wall_ms: float

    @property
    def total_bytes(self) -> int:
        return sum(r.metrics.bytes_total for r in self.per_owner.values())


def query_federation(
    owners: list[tuple[str, int]],
    t_q: Trajectory,
    spec,
    tau: float,
    mode: int = wire.MODE_FILTERED,
    published: PublishedQuery | None = None,
    cost: CostModel = CostModel(),
    retain_payloads: bool = False,
) -> FederationResult:
    """Broadcast one published query to every owner and union the answers.

    The same grid sequence goes to all owners (one publish, one privacy
    spend). Any owner failure fails the whole query: a partial union would
    silently misreport the federation's answer.
    """
    if not owners:
        raise ConfigurationError("need at least one owner address")
    t0 = time.perf_counter()

    def one(addr: tuple[str, int]) -> QueryResult:
        return run_query(
            addr, t_q, spec, tau,
            mode=mode, published=published, cost=cost, retain_payloads=retain_payloads,
        )

    results: dict[str, QueryResult] = {}
    failed: dict[str, Exception] = {}
    with ThreadPoolExecutor(max_workers=len(owners)) as pool:
        futures = {f"{h}:{p}": pool.submit(one, (h, p)) for h, p in owners}
        for label, fut in futures.items():
            try:
                results[label] = fut.result()
            except Exception as e:
                failed[label] = e
    if failed:
        raise PartialResultError(failed)

    union = sorted(set().union(*(r.matched_ids for r in results.values())))
    wall_ms = (time.perf_counter() - t0) * 1e3
    return FederationResult(matched_ids=tuple(union), per_owner=results, wall_ms=wall_ms)
