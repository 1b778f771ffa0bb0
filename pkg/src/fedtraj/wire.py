"""Binary wire protocol for the query federation.

Every message travels as one frame:

    magic "FTMP" | u8 version | u8 type | u32 body length | body | u32 crc

with little-endian integers throughout and the CRC32 taken over everything
before it (magic included). Secure-session traffic rides inside PruneSession
and ValidateSession frames whose bodies begin with a session id and a
sub-message kind.

This module is pure serialization: dataclasses in, bytes out, and back.
Malformed input maps to a distinct error per failure (magic, version,
checksum, truncation, unknown type) so transport code can report precisely.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Union

from .errors import TransportError
from .grid import GridId

__all__ = [
    "MAGIC",
    "VERSION",
    "FRAME_OVERHEAD",
    "MsgType",
    "SvKind",
    "Hello",
    "HelloAck",
    "PublishGrids",
    "FilterStats",
    "SvOffer",
    "SvInput",
    "SvWork",
    "SvResult",
    "SessionFrame",
    "ResultSet",
    "Error",
    "BadMagicError",
    "UnsupportedVersionError",
    "FrameChecksumError",
    "FrameTruncatedError",
    "UnknownMessageTypeError",
    "encode",
    "decode",
    "frame_length",
    "read_frame",
]

MAGIC = b"FTMP"
VERSION = 1
_HEADER = struct.Struct("<4sBBI")
FRAME_OVERHEAD = _HEADER.size + 4  # header plus trailing crc


class MsgType:
    HELLO = 1
    HELLO_ACK = 2
    PUBLISH_GRIDS = 3
    FILTER_STATS = 4
    PRUNE_SESSION = 5
    VALIDATE_SESSION = 6
    RESULT_SET = 7
    ERROR = 8


class SvKind:
    OFFER = 1
    INPUT = 2
    WORK = 3
    RESULT = 4


MODE_FILTERED = 0
MODE_NAIVE = 1


class BadMagicError(TransportError):
    """Stream does not start with the protocol magic."""


class UnsupportedVersionError(TransportError):
    """Peer speaks a protocol version this build does not."""


class FrameChecksumError(TransportError):
    """Frame bytes do not match their checksum."""


class FrameTruncatedError(TransportError):
    """Stream ended inside a frame."""


class UnknownMessageTypeError(TransportError):
    """Frame type byte is not one this protocol defines."""


@dataclass(frozen=True)
class Hello:
    """Client opener; carries the tessellation so mismatches die at handshake."""

    origin_x: float
    origin_y: float
    cell_side: float
    tau: float
    mode: int  # MODE_FILTERED or MODE_NAIVE


@dataclass(frozen=True)
class HelloAck:
    db_size: int


@dataclass(frozen=True)
class PublishGrids:
    """The published query: cell ids only, plus the thresholds they were built for."""

    tau: float
    cell_side: float
    grids: tuple[GridId, ...]


@dataclass(frozen=True)
class FilterStats:
    candidate_count: int
    partition_count: int


@dataclass(frozen=True)
class SvOffer:
    """Owner opens a verification session and reveals only its segment count."""

    session_id: int
    n_segments: int


@dataclass(frozen=True)
class SvInput:
    """Client's session input. ``blob`` is the quantized query points,
    readable only by the secure evaluator; the owner relays it unread."""

    session_id: int
    n_points: int
    tau_q: int  # effective threshold in fixed-point units
    blob: bytes


@dataclass(frozen=True)
class SvWork:
    """Stand-in for the secure computation's traffic: n_ops comparisons'
    worth of padding, sized by the configured cost model."""

    session_id: int
    n_ops: int
    padding: bytes


@dataclass(frozen=True)
class SvResult:
    session_id: int
    match: bool


SvMessage = Union[SvOffer, SvInput, SvWork, SvResult]


@dataclass(frozen=True)
class SessionFrame:
    """A secure-session sub-message tagged with its role on the wire."""

    msg_type: int  # MsgType.PRUNE_SESSION or MsgType.VALIDATE_SESSION
    sv: SvMessage


@dataclass(frozen=True)
class ResultSet:
    matched_ids: tuple[str, ...]


@dataclass(frozen=True)
class Error:
    code: int
    text: str


Message = Union[
    Hello, HelloAck, PublishGrids, FilterStats, SessionFrame, ResultSet, Error
]


def _frame(msg_type: int, body: bytes) -> bytes:
    head = _HEADER.pack(MAGIC, VERSION, msg_type, len(body))
    return head + body + struct.pack("<I", zlib.crc32(head + body))


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _encode_sv(sv: SvMessage) -> bytes:
    if isinstance(sv, SvOffer):
        return struct.pack("<IBI", sv.session_id, SvKind.OFFER, sv.n_segments)
    if isinstance(sv, SvInput):
        return (
            struct.pack("<IBIq", sv.session_id, SvKind.INPUT, sv.n_points, sv.tau_q)
            + sv.blob
        )
    if isinstance(sv, SvWork):
        return (
            struct.pack("<IBI", sv.session_id, SvKind.WORK, sv.n_ops) + sv.padding
        )
    if isinstance(sv, SvResult):
        return struct.pack("<IBB", sv.session_id, SvKind.RESULT, int(sv.match))
    raise TypeError(f"not a session message: {sv!r}")


def encode(msg: Message) -> bytes:
    """Serialize one message into a complete frame."""
    if isinstance(msg, Hello):
        body = struct.pack(
            "<ddddB", msg.origin_x, msg.origin_y, msg.cell_side, msg.tau, msg.mode
        )
        return _frame(MsgType.HELLO, body)
    if isinstance(msg, HelloAck):
        return _frame(MsgType.HELLO_ACK, struct.pack("<Q", msg.db_size))
    if isinstance(msg, PublishGrids):
        body = struct.pack("<ddI", msg.tau, msg.cell_side, len(msg.grids))
        body += b"".join(struct.pack("<qq", g.ix, g.iy) for g in msg.grids)
        return _frame(MsgType.PUBLISH_GRIDS, body)
    if isinstance(msg, FilterStats):
        body = struct.pack("<QI", msg.candidate_count, msg.partition_count)
        return _frame(MsgType.FILTER_STATS, body)
    if isinstance(msg, SessionFrame):
        if msg.msg_type not in (MsgType.PRUNE_SESSION, MsgType.VALIDATE_SESSION):
            raise TypeError(f"not a session frame type: {msg.msg_type}")
        return _frame(msg.msg_type, _encode_sv(msg.sv))
    if isinstance(msg, ResultSet):
        body = struct.pack("<I", len(msg.matched_ids))
        body += b"".join(_pack_str(tid) for tid in msg.matched_ids)
        return _frame(MsgType.RESULT_SET, body)
    if isinstance(msg, Error):
        return _frame(MsgType.ERROR, struct.pack("<I", msg.code) + _pack_str(msg.text))
    raise TypeError(f"cannot encode {type(msg).__name__}")


def frame_length(msg: Message) -> int:
    return len(encode(msg))


class _Cursor:
    def __init__(self, body: bytes):
        self.body = body
        self.pos = 0

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.body):
            raise FrameTruncatedError("frame body shorter than its layout")
        out = struct.unpack_from(fmt, self.body, self.pos)
        self.pos += size
        return out

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.body):
            raise FrameTruncatedError("frame body shorter than its layout")
        out = self.body[self.pos : self.pos + n]
        self.pos += n
        return out

    def rest(self) -> bytes:
        out = self.body[self.pos :]
        self.pos = len(self.body)
        return out

    def string(self) -> str:
        (ln,) = self.unpack("<H")
        return self.take(ln).decode("utf-8")


def _decode_sv(msg_type: int, body: bytes) -> SessionFrame:
    c = _Cursor(body)
    session_id, kind = c.unpack("<IB")
    if kind == SvKind.OFFER:
        (n_segments,) = c.unpack("<I")
        sv: SvMessage = SvOffer(session_id, n_segments)
    elif kind == SvKind.INPUT:
        n_points, tau_q = c.unpack("<Iq")
        sv = SvInput(session_id, n_points, tau_q, c.rest())
    elif kind == SvKind.WORK:
        (n_ops,) = c.unpack("<I")
        sv = SvWork(session_id, n_ops, c.rest())
    elif kind == SvKind.RESULT:
        (bit,) = c.unpack("<B")
        sv = SvResult(session_id, bool(bit))
    else:
        raise UnknownMessageTypeError(f"unknown session sub-message kind {kind}")
    return SessionFrame(msg_type, sv)


def decode_body(msg_type: int, body: bytes) -> Message:
    """Parse a frame body whose checksum has already been verified."""
    c = _Cursor(body)
    if msg_type == MsgType.HELLO:
        ox, oy, side, tau, mode = c.unpack("<ddddB")
        return Hello(ox, oy, side, tau, mode)
    if msg_type == MsgType.HELLO_ACK:
        (n,) = c.unpack("<Q")
        return HelloAck(n)
    if msg_type == MsgType.PUBLISH_GRIDS:
        tau, side, count = c.unpack("<ddI")
        grids = tuple(GridId(*c.unpack("<qq")) for _ in range(count))
        return PublishGrids(tau, side, grids)
    if msg_type == MsgType.FILTER_STATS:
        n, p = c.unpack("<QI")
        return FilterStats(n, p)
    if msg_type in (MsgType.PRUNE_SESSION, MsgType.VALIDATE_SESSION):
        return _decode_sv(msg_type, body)
    if msg_type == MsgType.RESULT_SET:
        (count,) = c.unpack("<I")
        return ResultSet(tuple(c.string() for _ in range(count)))
    if msg_type == MsgType.ERROR:
        (code,) = c.unpack("<I")
        return Error(code, c.string())
    raise UnknownMessageTypeError(f"unknown message type {msg_type}")


def decode(frame: bytes) -> Message:
    """Parse one complete frame held in memory."""
    if len(frame) < FRAME_OVERHEAD:
        raise FrameTruncatedError(f"frame of {len(frame)} bytes is below minimum")
    magic, version, msg_type, body_len = _HEADER.unpack_from(frame)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported protocol version {version}")
    if len(frame) != FRAME_OVERHEAD + body_len:
        raise FrameTruncatedError(
            f"frame declares {body_len} body bytes but carries {len(frame) - FRAME_OVERHEAD}"
        )
    (crc,) = struct.unpack_from("<I", frame, _HEADER.size + body_len)
    if zlib.crc32(frame[: _HEADER.size + body_len]) != crc:
        raise FrameChecksumError("frame does not match its checksum")
    return decode_body(msg_type, frame[_HEADER.size : _HEADER.size + body_len])


def read_frame(stream) -> bytes:
    """Read exactly one frame from a blocking binary stream.

    Returns the raw frame bytes (decode separately); raises on a stream that
    ends mid-frame or opens with garbage.
    """
    head = _read_exact(stream, _HEADER.size, allow_empty=False)
    magic, version, _msg_type, body_len = _HEADER.unpack(head)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported protocol version {version}")
    rest = _read_exact(stream, body_len + 4, allow_empty=False)
    return head + rest


def _read_exact(stream, n: int, allow_empty: bool) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = stream.read(n - got)
        if not chunk:
            if allow_empty and got == 0:
                return b""
            raise FrameTruncatedError(f"stream ended {n - got} bytes into a frame read")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)
