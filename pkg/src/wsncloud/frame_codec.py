"""XBee-style API frame encoding and decoding.

Wire layout::

    0x7E | length hi | length lo | frame_data ... | checksum

``length`` counts the bytes of ``frame_data`` only. The checksum is
``0xFF - (sum(frame_data) & 0xFF)``. In escaped mode every byte after the
start delimiter that belongs to the escape set is sent as ``0x7D`` followed
by the byte XOR ``0x20``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterator

START_DELIMITER = 0x7E
ESCAPE = 0x7D
XON = 0x11
XOFF = 0x13
ESCAPE_XOR = 0x20
ESCAPE_SET = frozenset((START_DELIMITER, ESCAPE, XON, XOFF))

IO_SAMPLE_FRAME_TYPE = 0x92
POLL_FRAME_TYPE = 0x17

ADDR16_UNKNOWN = 0xFFFE
MAX_FRAME_DATA = 0xFFFF
MAX_ANALOG = 1023

# [type][addr64][addr16][recv_options][sample_count][digital_mask][analog_mask]
_IO_HEADER = struct.Struct(">BQHBBHB")
# [type][frame_id][addr64][addr16][options][command]
_POLL_LAYOUT = struct.Struct(">BBQHB2s")


class FrameError(ValueError):
    """Base class for framing errors. ``code`` is a stable short identifier."""

    code = "invalid-frame"

    def __str__(self):
        detail = super().__str__()
        return f"{self.code} {detail}" if detail else self.code


class InvalidFrame(FrameError):
    code = "invalid-frame"


class NoStartDelimiter(FrameError):
    code = "no-start-delimiter"


class TruncatedFrame(FrameError):
    code = "truncated-frame"


class ChecksumMismatch(FrameError):
    code = "checksum-mismatch"

    def __init__(self, expected: int, found: int):
        self.expected = expected
        self.found = found
        super().__init__(f"expected={expected:02X} found={found:02X}")


class WrongFrameType(FrameError):
    code = "wrong-frame-type"


class MalformedPayload(FrameError):
    code = "malformed-payload"


def compute_checksum(frame_data: bytes) -> int:
    if not frame_data:
        raise InvalidFrame("frame_data is empty")
    return (0xFF - (sum(frame_data) & 0xFF)) & 0xFF


def verify_checksum(frame_data: bytes, checksum: int) -> bool:
    return (sum(frame_data) + checksum) & 0xFF == 0xFF


@dataclass(frozen=True)
class ApiFrame:
    """One API frame. ``length`` and ``checksum`` are derived from the data."""

    frame_data: bytes

    def __post_init__(self):
        data = bytes(self.frame_data)
        if not 1 <= len(data) <= MAX_FRAME_DATA:
            raise InvalidFrame(f"frame_data length {len(data)} outside 1..{MAX_FRAME_DATA}")
        object.__setattr__(self, "frame_data", data)

    @property
    def length(self) -> int:
        return len(self.frame_data)

    @property
    def checksum(self) -> int:
        return compute_checksum(self.frame_data)

    @property
    def frame_type(self) -> int:
        return self.frame_data[0]


def escape_bytes(raw: bytes) -> bytes:
    out = bytearray()
    for b in raw:
        if b in ESCAPE_SET:
            out.append(ESCAPE)
            out.append(b ^ ESCAPE_XOR)
        else:
            out.append(b)
    return bytes(out)


def encode_frame(frame: ApiFrame, escaped: bool = True) -> bytes:
    body = struct.pack(">H", frame.length) + frame.frame_data + bytes((frame.checksum,))
    if escaped:
        body = escape_bytes(body)
    return bytes((START_DELIMITER,)) + body


class _Reader:
    """Cursor over the bytes after a start delimiter, unescaping if asked."""

    def __init__(self, data: bytes, pos: int, escaped: bool):
        self.data = data
        self.pos = pos
        self.escaped = escaped

    def take(self, n: int, declared: int) -> bytes:
        out = bytearray()
        data = self.data
        while len(out) < n:
            if self.pos >= len(data):
                raise TruncatedFrame(f"declared length {declared}, stream ended early")
            b = data[self.pos]
            self.pos += 1
            if self.escaped and b == ESCAPE:
                if self.pos >= len(data):
                    raise TruncatedFrame("stream ends inside an escape sequence")
                b = data[self.pos] ^ ESCAPE_XOR
                self.pos += 1
            out.append(b)
        return bytes(out)


def _decode_at(data: bytes, start: int, escaped: bool) -> tuple[ApiFrame, int]:
    reader = _Reader(data, start + 1, escaped)
    try:
        (length,) = struct.unpack(">H", reader.take(2, 0))
    except TruncatedFrame:
        raise TruncatedFrame("length field incomplete") from None
    if length == 0:
        raise InvalidFrame("declared length is zero")
    frame_data = reader.take(length, length)
    try:
        (checksum,) = reader.take(1, length)
    except TruncatedFrame:
        raise TruncatedFrame(f"declared length {length}, checksum missing") from None
    if not verify_checksum(frame_data, checksum):
        raise ChecksumMismatch(compute_checksum(frame_data), checksum)
    return ApiFrame(frame_data), reader.pos


def decode_frame(data: bytes, escaped: bool = True) -> ApiFrame:
    """Decode the first frame in ``data``.

    Bytes before the first start delimiter are skipped; bytes after the
    frame's checksum are ignored.
    """
    data = bytes(data)
    start = data.find(START_DELIMITER)
    if start < 0:
        raise NoStartDelimiter("no 0x7E in input")
    frame, _ = _decode_at(data, start, escaped)
    return frame


def iter_frames(data: bytes, escaped: bool = True) -> Iterator[ApiFrame | FrameError]:
    """Yield every frame in a byte stream, or the error that broke it.

    After a bad frame the scan resumes at the next start delimiter.
    """
    data = bytes(data)
    pos = data.find(START_DELIMITER)
    while pos >= 0:
        try:
            frame, end = _decode_at(data, pos, escaped)
        except FrameError as exc:
            yield exc
            pos = data.find(START_DELIMITER, pos + 1)
            continue
        yield frame
        pos = data.find(START_DELIMITER, end)


@dataclass(frozen=True)
class IoSample:
    source_addr64: int
    source_addr16: int = ADDR16_UNKNOWN
    analog_mask: int = 0
    analog_values: tuple[int, ...] = ()
    digital_mask: int = 0
    digital_samples: int = 0
    sample_count: int = 1
    recv_options: int = 0x01

    def __post_init__(self):
        object.__setattr__(self, "analog_values", tuple(self.analog_values))
        if len(self.analog_values) != bin(self.analog_mask & 0xFF).count("1"):
            raise MalformedPayload(
                f"{len(self.analog_values)} analog values for mask {self.analog_mask:#04x}"
            )
        if any(not 0 <= v <= MAX_ANALOG for v in self.analog_values):
            raise MalformedPayload("analog value outside 0..1023")

    def analog(self) -> dict[int, int]:
        """Map channel number (ADk) to its reading."""
        channels = [k for k in range(8) if self.analog_mask >> k & 1]
        return dict(zip(channels, self.analog_values))


def serialize_io_sample(sample: IoSample, frame_type: int = IO_SAMPLE_FRAME_TYPE) -> bytes:
    out = bytearray(
        _IO_HEADER.pack(
            frame_type,
            sample.source_addr64,
            sample.source_addr16,
            sample.recv_options,
            sample.sample_count,
            sample.digital_mask,
            sample.analog_mask,
        )
    )
    if sample.digital_mask:
        out += struct.pack(">H", sample.digital_samples)
    for v in sample.analog_values:
        out += struct.pack(">H", v)
    return bytes(out)


def parse_io_sample(frame_data: bytes, frame_type: int = IO_SAMPLE_FRAME_TYPE) -> IoSample:
    frame_data = bytes(frame_data)
    if not frame_data or frame_data[0] != frame_type:
        found = f"{frame_data[0]:#04x}" if frame_data else "none"
        raise WrongFrameType(f"expected {frame_type:#04x}, found {found}")
    if len(frame_data) < _IO_HEADER.size:
        raise MalformedPayload(f"{len(frame_data)} bytes, header needs {_IO_HEADER.size}")
    _, addr64, addr16, options, count, dmask, amask = _IO_HEADER.unpack_from(frame_data)
    n_analog = bin(amask).count("1")
    expected = _IO_HEADER.size + (2 if dmask else 0) + 2 * n_analog
    if len(frame_data) != expected:
        raise MalformedPayload(
            f"masks digital={dmask:#06x} analog={amask:#04x} need {expected} bytes, got {len(frame_data)}"
        )
    pos = _IO_HEADER.size
    digital = 0
    if dmask:
        (digital,) = struct.unpack_from(">H", frame_data, pos)
        pos += 2
    values = struct.unpack_from(f">{n_analog}H", frame_data, pos)
    return IoSample(
        source_addr64=addr64,
        source_addr16=addr16,
        analog_mask=amask,
        analog_values=values,
        digital_mask=dmask,
        digital_samples=digital,
        sample_count=count,
        recv_options=options,
    )


@dataclass(frozen=True)
class PollRequest:
    dest_addr64: int
    frame_id: int = 0
    dest_addr16: int | None = None
    options: int = 0x00
    command: bytes = b"IS"

    def __post_init__(self):
        if not 0 <= self.frame_id <= 0xFF:
            raise ValueError("frame_id must fit in one byte")
        if len(self.command) != 2:
            raise ValueError("command must be two ASCII bytes")


def build_poll_request(req: PollRequest, frame_type: int = POLL_FRAME_TYPE) -> ApiFrame:
    addr16 = req.dest_addr16
    if addr16 is None or addr16 == 0xFFFF:
        addr16 = ADDR16_UNKNOWN
    return ApiFrame(
        _POLL_LAYOUT.pack(frame_type, req.frame_id, req.dest_addr64, addr16, req.options, req.command)
    )


def parse_poll_request(frame_data: bytes, frame_type: int = POLL_FRAME_TYPE) -> PollRequest:
    frame_data = bytes(frame_data)
    if not frame_data or frame_data[0] != frame_type:
        raise WrongFrameType(f"expected {frame_type:#04x}")
    if len(frame_data) != _POLL_LAYOUT.size:
        raise MalformedPayload(f"poll frame is {_POLL_LAYOUT.size} bytes, got {len(frame_data)}")
    _, frame_id, addr64, addr16, options, command = _POLL_LAYOUT.unpack(frame_data)
    return PollRequest(addr64, frame_id, addr16, options, command)


@dataclass
class FrameIdCounter:
    """Hands out frame ids cycling 1..255; 0 is reserved for "no ack"."""

    _last: int = field(default=0)

    def next(self) -> int:
        self._last = self._last % 255 + 1
        return self._last
