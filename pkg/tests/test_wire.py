"""Frame serialization: round trips and malformed-input errors."""

import io
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedtraj import GridId
from fedtraj.wire import (
    FRAME_OVERHEAD,
    MAGIC,
    VERSION,
    BadMagicError,
    Error,
    FilterStats,
    FrameChecksumError,
    FrameTruncatedError,
    Hello,
    HelloAck,
    MODE_FILTERED,
    MODE_NAIVE,
    MsgType,
    PublishGrids,
    ResultSet,
    SessionFrame,
    SvInput,
    SvOffer,
    SvResult,
    SvWork,
    UnknownMessageTypeError,
    UnsupportedVersionError,
    decode,
    encode,
    frame_length,
    read_frame,
)

MESSAGES = [
    Hello(0.0, 0.0, 690.194361945741, 50.0, MODE_FILTERED),
    Hello(-12.5, 3e6, 1.0, 0.001, MODE_NAIVE),
    HelloAck(0),
    HelloAck(10**12),
    PublishGrids(50.0, 690.0, (GridId(0, 0), GridId(-3, 7), GridId(2**40, -(2**40)))),
    PublishGrids(1.0, 2.0, ()),
    FilterStats(0, 0),
    FilterStats(12345, 678),
    SessionFrame(MsgType.PRUNE_SESSION, SvOffer(9, 4)),
    SessionFrame(MsgType.VALIDATE_SESSION, SvOffer(0, 1)),
    SessionFrame(MsgType.PRUNE_SESSION, SvInput(1, 2, 50_000, bytes(48))),
    SessionFrame(MsgType.VALIDATE_SESSION, SvInput(2, 1, 1, b"\x01" * 24)),
    SessionFrame(MsgType.PRUNE_SESSION, SvWork(3, 5, bytes(5 * 64))),
    SessionFrame(MsgType.VALIDATE_SESSION, SvWork(4, 1, b"")),
    SessionFrame(MsgType.PRUNE_SESSION, SvResult(5, True)),
    SessionFrame(MsgType.VALIDATE_SESSION, SvResult(6, False)),
    ResultSet(()),
    ResultSet(("t000001", "t000002", "üñïçø∂é-青")),
    Error(2, "filter contract violated"),
    Error(1, ""),
]


@pytest.mark.parametrize("msg", MESSAGES, ids=lambda m: type(m).__name__)
def test_round_trip(msg):
    frame = encode(msg)
    assert frame[:4] == MAGIC
    assert frame[4] == VERSION
    assert len(frame) == frame_length(msg)
    assert decode(frame) == msg


def test_frames_are_self_delimiting():
    stream = io.BytesIO(b"".join(encode(m) for m in MESSAGES))
    for msg in MESSAGES:
        assert decode(read_frame(stream)) == msg


def test_read_frame_handles_short_reads():
    class OneByteStream:
        def __init__(self, data):
            self.data = data
            self.pos = 0

        def read(self, n):
            out = self.data[self.pos : self.pos + 1]
            self.pos += len(out)
            return out

    frame = encode(HelloAck(42))
    assert read_frame(OneByteStream(frame)) == frame


class TestMalformed:
    def test_bad_magic(self):
        frame = bytearray(encode(HelloAck(1)))
        frame[:4] = b"HTTP"
        with pytest.raises(BadMagicError):
            decode(bytes(frame))
        with pytest.raises(BadMagicError):
            read_frame(io.BytesIO(bytes(frame)))

    def test_version_mismatch(self):
        frame = bytearray(encode(HelloAck(1)))
        frame[4] = 9
        with pytest.raises(UnsupportedVersionError):
            decode(bytes(frame))
        with pytest.raises(UnsupportedVersionError):
            read_frame(io.BytesIO(bytes(frame)))

    def test_corrupt_body(self):
        frame = bytearray(encode(Hello(1.0, 2.0, 3.0, 4.0, MODE_FILTERED)))
        frame[FRAME_OVERHEAD] ^= 0xFF  # lands inside the 33-byte body
        with pytest.raises(FrameChecksumError):
            decode(bytes(frame))

    def test_corrupt_checksum(self):
        frame = bytearray(encode(HelloAck(7)))
        frame[-1] ^= 0x01
        with pytest.raises(FrameChecksumError):
            decode(bytes(frame))

    def test_truncated_frame(self):
        frame = encode(ResultSet(("abc",)))
        with pytest.raises(FrameTruncatedError):
            decode(frame[:-3])
        with pytest.raises(FrameTruncatedError):
            decode(frame[:5])
        with pytest.raises(FrameTruncatedError):
            read_frame(io.BytesIO(frame[:-3]))

    def test_stream_ending_mid_header(self):
        with pytest.raises(FrameTruncatedError):
            read_frame(io.BytesIO(b"FT"))

    def test_unknown_message_type(self):
        body = b""
        head = struct.pack("<4sBBI", MAGIC, VERSION, 200, len(body))
        import zlib

        frame = head + body + struct.pack("<I", zlib.crc32(head + body))
        with pytest.raises(UnknownMessageTypeError):
            decode(frame)

    def test_unknown_session_kind(self):
        body = struct.pack("<IB", 3, 77)
        head = struct.pack("<4sBBI", MAGIC, VERSION, MsgType.PRUNE_SESSION, len(body))
        import zlib

        frame = head + body + struct.pack("<I", zlib.crc32(head + body))
        with pytest.raises(UnknownMessageTypeError):
            decode(frame)

    def test_body_shorter_than_layout(self):
        # Valid checksum over a body that is too small for the declared type.
        body = struct.pack("<I", 5)  # HELLO needs 33 bytes
        head = struct.pack("<4sBBI", MAGIC, VERSION, MsgType.HELLO, len(body))
        import zlib

        frame = head + body + struct.pack("<I", zlib.crc32(head + body))
        with pytest.raises(FrameTruncatedError):
            decode(frame)

    def test_length_field_lies(self):
        frame = bytearray(encode(HelloAck(1)))
        struct.pack_into("<I", frame, 6, 4)  # declare a shorter body
        with pytest.raises(FrameTruncatedError):
            decode(bytes(frame))


@given(
    ids=st.lists(st.text(min_size=1, max_size=20), max_size=8),
    code=st.integers(0, 2**32 - 1),
)
@settings(max_examples=200, deadline=None)
def test_round_trip_property(ids, code):
    for msg in (ResultSet(tuple(ids)), Error(code, " ".join(ids))):
        assert decode(encode(msg)) == msg


@given(junk=st.binary(max_size=60))
@settings(max_examples=300, deadline=None)
def test_decode_never_crashes_on_junk(junk):
    try:
        decode(junk)
    except (BadMagicError, UnsupportedVersionError, FrameChecksumError,
            FrameTruncatedError, UnknownMessageTypeError):
        pass
