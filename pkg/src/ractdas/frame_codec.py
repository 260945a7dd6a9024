"""Bit-exact codec for the reader's serial tag protocol.

A tag identity is 10 uppercase hex digits (40 bits). On the wire it travels
as a 12-byte frame: line feed (0x0A), the ten ASCII digit codes, carriage
return (0x0D). Each byte is serialized 8N1, least significant bit first,
so a full frame is exactly 120 bits.

Also provides an incremental scanner that recovers frames from a noisy
byte feed, resynchronizing on the start byte.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field

START_BYTE = 0x0A
STOP_BYTE = 0x0D
FRAME_LEN = 12
TAG_DIGITS = 10
BITS_PER_BYTE_FRAMED = 10  # start bit + 8 data bits + stop bit

_HEX_UPPER = set(string.hexdigits.upper()) - set("abcdef")


class FrameError(ValueError):
    """Base class for frame/bitstream decoding failures."""


class BadStartByte(FrameError):
    pass


class BadStopByte(FrameError):
    pass


class NonHexPayload(FrameError):
    pass


class LengthError(FrameError):
    pass


class FramingError(FrameError):
    """A 10-bit group violated start=0 / stop=1 framing."""

    def __init__(self, group_index: int):
        super().__init__(f"bad 8N1 framing in group {group_index}")
        self.group_index = group_index


@dataclass(frozen=True)
class TagId:
    """A 10-hex-digit (40-bit) tag identity, canonically uppercase."""

    digits: str

    def __post_init__(self):
        d = self.digits.upper()
        if len(d) != TAG_DIGITS or any(c not in _HEX_UPPER for c in d):
            raise ValueError(f"tag id must be 10 hex digits, got {self.digits!r}")
        object.__setattr__(self, "digits", d)

    @classmethod
    def from_int(cls, value: int) -> "TagId":
        if not 0 <= value < 1 << 40:
            raise ValueError("tag value out of 40-bit range")
        return cls(f"{value:010X}")

    @property
    def value(self) -> int:
        return int(self.digits, 16)

    def __str__(self) -> str:
        return self.digits

    def __lt__(self, other: "TagId") -> bool:
        return self.value < other.value


def encode_frame(tag: TagId) -> bytes:
    """12-byte wire frame: 0x0A, ASCII of each digit, 0x0D."""
    return bytes([START_BYTE]) + tag.digits.encode("ascii") + bytes([STOP_BYTE])


def decode_frame(frame: bytes) -> TagId:
    """Inverse of encode_frame; rejects bad delimiters and non-hex payload."""
    frame = bytes(frame)
    if len(frame) != FRAME_LEN:
        raise LengthError(f"frame must be {FRAME_LEN} bytes, got {len(frame)}")
    if frame[0] != START_BYTE:
        raise BadStartByte(f"expected 0x0A start byte, got {frame[0]:#04x}")
    if frame[-1] != STOP_BYTE:
        raise BadStopByte(f"expected 0x0D stop byte, got {frame[-1]:#04x}")
    payload = frame[1:-1]
    for i, b in enumerate(payload):
        if chr(b) not in _HEX_UPPER:
            raise NonHexPayload(f"payload byte {i} = {b:#04x} is not hex ASCII")
    return TagId(payload.decode("ascii"))


def encode_uart(data: bytes) -> str:
    """8N1 bitstream for a byte sequence, LSB first.

    Each byte becomes ten symbols: start bit '0', the eight data bits least
    significant first, stop bit '1'. Returned as a '0'/'1' string.
    """
    out = []
    for b in data:
        out.append("0")
        for k in range(8):
            out.append("1" if (b >> k) & 1 else "0")
        out.append("1")
    return "".join(out)


def decode_uart(bits: str) -> bytes:
    """Inverse of encode_uart; validates framing of every 10-bit group."""
    if len(bits) % BITS_PER_BYTE_FRAMED != 0:
        raise LengthError(f"bitstream length {len(bits)} not a multiple of 10")
    out = bytearray()
    for g in range(len(bits) // BITS_PER_BYTE_FRAMED):
        group = bits[g * 10 : g * 10 + 10]
        if group[0] != "0" or group[9] != "1":
            raise FramingError(g)
        byte = 0
        for k in range(8):
            if group[1 + k] == "1":
                byte |= 1 << k
            elif group[1 + k] != "0":
                raise FramingError(g)
        out.append(byte)
    return bytes(out)


@dataclass(frozen=True)
class ScanError:
    """A malformed frame candidate seen by the scanner."""

    reason: str
    offset: int  # byte index within the candidate (0 = start byte)
    byte: int


@dataclass(frozen=True)
class ScannerState:
    """Carry-over between scan_stream calls: partial frame plus skip count.

    pending holds at most 12 bytes (a valid-so-far frame prefix); anything
    longer is malformed by construction and has already been flushed.
    """

    pending: bytes = b""
    skipped: int = 0


def _classify(offset_after_start: int, b: int) -> str | None:
    """None if byte is legal at this payload/stop position, else a reason."""
    if offset_after_start < TAG_DIGITS:
        if chr(b) in _HEX_UPPER:
            return None
        if b == START_BYTE or b == STOP_BYTE:
            return "premature delimiter in payload"
        return "non-hex payload byte"
    return None if b == STOP_BYTE else "missing stop byte"


def scan_stream(
    buffer: bytes, state: ScannerState | None = None
) -> tuple[list[TagId], ScannerState, list[ScanError]]:
    """Extract every well-formed frame from state.pending + buffer.

    Bytes outside frames are skipped and counted; malformed candidates are
    reported and scanning resynchronizes at the next start byte. A partial
    frame at the tail is retained for the next call.
    """
    if state is None:
        state = ScannerState()
    data = state.pending + bytes(buffer)
    skipped = state.skipped
    tags: list[TagId] = []
    errors: list[ScanError] = []
    tail = b""
    i = 0
    while True:
        j = data.find(START_BYTE, i)
        if j < 0:
            skipped += len(data) - i
            break
        skipped += j - i
        chunk = data[j + 1 : j + FRAME_LEN]
        bad = None
        for k, b in enumerate(chunk):
            reason = _classify(k, b)
            if reason is not None:
                bad = ScanError(reason, k + 1, b)
                break
        if bad is not None:
            errors.append(bad)
            i = j + 1  # resync: next start byte may sit inside the candidate
        elif len(chunk) < FRAME_LEN - 1:
            tail = data[j:]  # valid prefix, wait for more bytes
            break
        else:
            tags.append(TagId(chunk[:TAG_DIGITS].decode("ascii")))
            i = j + FRAME_LEN
    return tags, ScannerState(pending=tail, skipped=skipped), errors
