"""Chunked audio transport over OSC/UDP.

One OSC message per UDP datagram. Message layout (all multi-byte fields
big-endian, every section padded to a 4-byte boundary):

    address pattern      "/context" or "/prediction", NUL-padded
    type tag string      ",iiib"
    int32                step_id
    int32                chunk_index
    int32                chunk_total
    blob                 int32 byte count + float32 samples

Encoding and decoding are pure; ``Reassembler`` is stateful and must be
owned by a single receive loop.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

ADDRESSES = ("/context", "/prediction")
TYPE_TAGS = ",iiib"

DEFAULT_PACKET_SIZE = 4410  # samples per chunk: 0.1 s at 44.1 kHz


class WireError(Exception):
    """Base class for transport-layer failures."""


class PacketSizeError(WireError):
    """Sample payload exceeds the configured packet size."""


class DecodeError(WireError):
    """Base class for malformed incoming messages."""


class HeaderError(DecodeError):
    """Chunk header violates its invariants.

    Raised on encode for locally constructed headers and on decode for
    incoming ones, so receive loops treat it as malformed input.
    """


class TruncatedMessage(DecodeError):
    pass


class BadAddress(DecodeError):
    pass


class BadTypeTags(DecodeError):
    pass


class BadBlob(DecodeError):
    pass


class ProtocolError(WireError):
    """Chunks of one step disagree about the step's framing."""


@dataclass(frozen=True)
class ChunkHeader:
    """Reassembly header carried by every chunk."""

    step_id: int
    chunk_index: int
    chunk_total: int

    def validate(self) -> None:
        if self.step_id < 0:
            raise HeaderError(f"step_id must be >= 0, got {self.step_id}")
        if self.chunk_total < 1:
            raise HeaderError(f"chunk_total must be >= 1, got {self.chunk_total}")
        if not 0 <= self.chunk_index < self.chunk_total:
            raise HeaderError(
                f"chunk_index {self.chunk_index} outside [0, {self.chunk_total})"
            )


@dataclass(frozen=True)
class ChunkPacket:
    address: str
    header: ChunkHeader
    samples: np.ndarray  # float32, nominally in [-1, 1]


def _pad4(n: int) -> int:
    return (n + 3) & ~3


def _pack_string(s: str) -> bytes:
    raw = s.encode("ascii") + b"\x00"
    return raw + b"\x00" * (_pad4(len(raw)) - len(raw))


def encode_packet(
    address: str,
    header: ChunkHeader,
    samples: np.ndarray,
    packet_size: int = DEFAULT_PACKET_SIZE,
) -> bytes:
    """Encode one chunk as an OSC message.

    Raises PacketSizeError if the payload exceeds ``packet_size`` and
    HeaderError if the header invariants do not hold.
    """
    if address not in ADDRESSES:
        raise BadAddress(f"unknown address pattern {address!r}")
    header.validate()
    samples = np.asarray(samples, dtype=np.float32)
    if samples.ndim != 1 or samples.size == 0:
        raise PacketSizeError("samples must be a non-empty 1-D sequence")
    if samples.size > packet_size:
        raise PacketSizeError(
            f"{samples.size} samples exceed packet_size {packet_size}"
        )
    blob = samples.astype(">f4").tobytes()
    msg = (
        _pack_string(address)
        + _pack_string(TYPE_TAGS)
        + struct.pack(">iii", header.step_id, header.chunk_index, header.chunk_total)
        + struct.pack(">i", len(blob))
        + blob
    )
    # float32 payloads are already 4-byte aligned; assert the OSC framing rule
    assert len(msg) % 4 == 0
    return msg


def decode_packet(data: bytes) -> ChunkPacket:
    """Decode an OSC message produced by :func:`encode_packet`.

    Inverse of encode_packet on valid input; raises a DecodeError subclass
    describing the first malformation found.
    """
    nul = data.find(b"\x00")
    if nul < 0:
        raise TruncatedMessage("no NUL terminator in address pattern")
    try:
        address = data[:nul].decode("ascii")
    except UnicodeDecodeError as exc:
        raise BadAddress("address pattern is not ASCII") from exc
    if not address.startswith("/") or address not in ADDRESSES:
        raise BadAddress(f"unexpected address pattern {address!r}")
    pos = _pad4(nul + 1)

    if len(data) < pos + 4:
        raise TruncatedMessage("message ends before type tag string")
    tag_end = data.find(b"\x00", pos)
    if tag_end < 0:
        raise TruncatedMessage("no NUL terminator in type tag string")
    tags = data[pos:tag_end].decode("ascii", errors="replace")
    if tags != TYPE_TAGS:
        raise BadTypeTags(f"expected type tags {TYPE_TAGS!r}, got {tags!r}")
    pos = _pad4(tag_end + 1)

    if len(data) < pos + 16:
        raise TruncatedMessage("message ends inside the argument section")
    step_id, chunk_index, chunk_total, blob_len = struct.unpack_from(">iiii", data, pos)
    pos += 16
    if blob_len < 0 or blob_len % 4 != 0:
        raise BadBlob(f"blob length {blob_len} is not a multiple of 4")
    if len(data) < pos + blob_len:
        raise TruncatedMessage("blob extends past end of message")
    samples = np.frombuffer(data, dtype=">f4", count=blob_len // 4, offset=pos)

    header = ChunkHeader(step_id, chunk_index, chunk_total)
    header.validate()
    return ChunkPacket(address, header, samples.astype(np.float32))


def chunk_step(
    address: str,
    step_id: int,
    samples: np.ndarray,
    packet_size: int = DEFAULT_PACKET_SIZE,
) -> list[bytes]:
    """Split one step's samples into encoded chunk messages."""
    samples = np.asarray(samples, dtype=np.float32)
    total = max(1, -(-samples.size // packet_size))
    out = []
    for i in range(total):
        part = samples[i * packet_size : (i + 1) * packet_size]
        out.append(
            encode_packet(address, ChunkHeader(step_id, i, total), part, packet_size)
        )
    return out


class Outcome(enum.Enum):
    INCOMPLETE = "incomplete"
    COMPLETE = "complete"
    STALE_DROPPED = "stale_dropped"
    DUPLICATE_DROPPED = "duplicate_dropped"


@dataclass
class FeedOutcome:
    kind: Outcome
    step_id: int | None = None
    samples: np.ndarray | None = None
    dropped_step_id: int | None = None  # partial step discarded by a newer one


class Reassembler:
    """Single-writer reassembly of chunked steps.

    Chunks may arrive in any order; a packet with a newer step_id discards
    any partial older step, and anything at or below the last completed
    step never touches the staging buffer. Completion fires exactly once
    per step_id.
    """

    def __init__(self, packet_size: int = DEFAULT_PACKET_SIZE):
        self.packet_size = packet_size
        self.current_step_id = -1
        self._chunk_total: int | None = None
        self._received: dict[int, np.ndarray] = {}
        self._completed = False

    @property
    def pending_chunks(self) -> int:
        return len(self._received)

    def reset(self) -> None:
        self.current_step_id = -1
        self._chunk_total = None
        self._received = {}
        self._completed = False

    def abandon_current(self) -> int | None:
        """Drop a partial step (timeout path). Returns the dropped step_id."""
        if self._chunk_total is not None and not self._completed:
            dropped = self.current_step_id
            self._chunk_total = None
            self._received = {}
            self._completed = True
            return dropped
        return None

    def feed(self, packet: ChunkPacket) -> FeedOutcome:
        hdr = packet.header
        hdr.validate()
        if hdr.step_id < self.current_step_id:
            return FeedOutcome(Outcome.STALE_DROPPED, step_id=hdr.step_id)

        dropped = None
        if hdr.step_id > self.current_step_id:
            if self._received and not self._completed:
                dropped = self.current_step_id
            self.current_step_id = hdr.step_id
            self._chunk_total = hdr.chunk_total
            self._received = {}
            self._completed = False
        elif self._completed:
            # chunk of an already-delivered step: never alters any buffer
            return FeedOutcome(Outcome.DUPLICATE_DROPPED, step_id=hdr.step_id)

        if hdr.chunk_total != self._chunk_total:
            raise ProtocolError(
                f"step {hdr.step_id}: chunk_total {hdr.chunk_total} disagrees "
                f"with {self._chunk_total}"
            )
        if hdr.chunk_index in self._received:
            return FeedOutcome(
                Outcome.DUPLICATE_DROPPED, step_id=hdr.step_id, dropped_step_id=dropped
            )
        if hdr.chunk_index < hdr.chunk_total - 1 and packet.samples.size != self.packet_size:
            raise ProtocolError(
                f"step {hdr.step_id}: non-final chunk {hdr.chunk_index} carries "
                f"{packet.samples.size} samples, expected {self.packet_size}"
            )
        self._received[hdr.chunk_index] = packet.samples

        if len(self._received) == self._chunk_total:
            full = np.concatenate(
                [self._received[i] for i in range(self._chunk_total)]
            )
            self._completed = True
            self._received = {}
            return FeedOutcome(
                Outcome.COMPLETE,
                step_id=hdr.step_id,
                samples=full,
                dropped_step_id=dropped,
            )
        return FeedOutcome(Outcome.INCOMPLETE, step_id=hdr.step_id, dropped_step_id=dropped)
