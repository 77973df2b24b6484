"""UDP endpoints for the chunked OSC streams.

ChunkSender splits a step into datagrams; ChunkReceiver owns a socket,
a receive thread, and the single-writer reassembler, publishing completed
steps over a queue. Both sides of the system use the same pair, differing
only in address pattern and port direction.
"""

from __future__ import annotations

import queue
import socket
import threading
import time
from dataclasses import dataclass

import numpy as np

from . import wire


@dataclass
class CompletedStep:
    step_id: int
    samples: np.ndarray
    receive_span_ms: float  # first chunk seen -> last chunk seen
    source: tuple | None = None


class ChunkSender:
    def __init__(self, host: str, port: int, packet_size: int):
        self.addr = (host, port)
        self.packet_size = packet_size
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)

    def send_step(self, address: str, step_id: int, samples: np.ndarray) -> int:
        """Send one step as chunked datagrams; returns the chunk count."""
        msgs = wire.chunk_step(address, step_id, samples, self.packet_size)
        for msg in msgs:
            self._sock.sendto(msg, self.addr)
        return len(msgs)

    def close(self) -> None:
        self._sock.close()


class ChunkReceiver:
    """Receive loop for one direction of the stream.

    Completed steps are pushed to ``completed``; partial steps older than
    ``stale_timeout_s`` are abandoned and reported via ``dropped``. Decode
    and protocol errors are counted, never raised into the socket loop.
    """

    def __init__(
        self,
        bind_host: str,
        port: int,
        address: str,
        packet_size: int,
        stale_timeout_s: float | None = None,
    ):
        self.address = address
        self.stale_timeout_s = stale_timeout_s
        self.reassembler = wire.Reassembler(packet_size)
        self.completed: queue.Queue[CompletedStep] = queue.Queue()
        self.dropped: queue.Queue[int] = queue.Queue()
        self.decode_errors = 0
        self.stale_packets = 0
        self.duplicate_packets = 0
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        # a full step arrives as one burst of chunks (~266 KB at the default
        # geometry); the stock receive buffer drops the tail of such bursts
        try:
            self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 22)
        except OSError:
            pass
        self._sock.bind((bind_host, port))
        self._sock.settimeout(0.05)
        self.port = self._sock.getsockname()[1]
        self._stop = threading.Event()
        self._first_chunk_at: float | None = None
        self._thread = threading.Thread(target=self._run, daemon=True)

    def start(self) -> "ChunkReceiver":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=2.0)
        self._sock.close()

    def set_packet_size(self, packet_size: int) -> None:
        # takes effect for the next step; the reassembler is idle between steps
        self.reassembler.packet_size = packet_size

    def _check_timeout(self) -> None:
        if (
            self.stale_timeout_s is not None
            and self._first_chunk_at is not None
            and self.reassembler.pending_chunks > 0
            and time.monotonic() - self._first_chunk_at > self.stale_timeout_s
        ):
            dropped = self.reassembler.abandon_current()
            self._first_chunk_at = None
            if dropped is not None:
                self.dropped.put(dropped)

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                data, source = self._sock.recvfrom(65536)
            except socket.timeout:
                self._check_timeout()
                continue
            except OSError:
                break
            try:
                packet = wire.decode_packet(data)
            except wire.DecodeError:
                self.decode_errors += 1
                continue
            if packet.address != self.address:
                self.decode_errors += 1
                continue
            if self.reassembler.pending_chunks == 0:
                self._first_chunk_at = time.monotonic()
            try:
                outcome = self.reassembler.feed(packet)
            except wire.ProtocolError:
                self.decode_errors += 1
                continue
            if outcome.dropped_step_id is not None:
                self.dropped.put(outcome.dropped_step_id)
            if outcome.kind is wire.Outcome.STALE_DROPPED:
                self.stale_packets += 1
            elif outcome.kind is wire.Outcome.DUPLICATE_DROPPED:
                self.duplicate_packets += 1
            elif outcome.kind is wire.Outcome.COMPLETE:
                span = (time.monotonic() - self._first_chunk_at) * 1000.0
                self._first_chunk_at = None
                self.completed.put(
                    CompletedStep(outcome.step_id, outcome.samples, span, source)
                )
            self._check_timeout()
