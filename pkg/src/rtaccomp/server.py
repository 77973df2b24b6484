"""Inference server: chunk ingestion, rolling buffers, masked generation.

ServerCore is the synchronous heart: it owns the two rolling window
buffers (observed context and generated target), applies the context
mask, builds generator requests, and commits responses. UdpServer wraps
it with the chunked OSC transport: a receive loop feeds completed steps
to a single worker that runs cycles one at a time, so buffer mutation
never interleaves.

The server is regime-agnostic for placement: it always generates the
last step of the window and the client decides where to write it; the
look-ahead depth enters only through the context mask.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass

import numpy as np

from . import generators, transport
from .latency import StageTimings
from .window import STEMS, WindowConfig, shift_left


@dataclass
class CycleResult:
    step_id: int
    audio: np.ndarray  # fade prelude + step
    timings: StageTimings


class ServerCore:
    """Single-threaded server state machine."""

    def __init__(
        self,
        cfg: WindowConfig,
        spec: generators.GeneratorSpec,
        time_scale: float = 1.0,
        on_event=None,
    ):
        self.cfg = cfg
        self.spec = spec
        self.time_scale = time_scale
        self.on_event = on_event or (lambda kind, **fields: None)
        self.instrument = "bass"
        self.context_ring = np.zeros(cfg.window_samples, dtype=np.float32)
        self.generated_ring = np.zeros(cfg.window_samples, dtype=np.float32)
        self.cycles_run = 0
        self.cycles_dropped = 0

    def reset(self) -> None:
        self.context_ring = np.zeros(self.cfg.window_samples, dtype=np.float32)
        self.generated_ring = np.zeros(self.cfg.window_samples, dtype=np.float32)
        self.cycles_run = 0
        self.on_event("reset")

    def reconfigure(
        self, cfg: WindowConfig, spec: generators.GeneratorSpec | None = None
    ) -> None:
        if cfg.window_samples != self.cfg.window_samples:
            raise ValueError("receptive field length is fixed for a session")
        self.cfg = cfg
        if spec is not None:
            self.spec = spec
        self.on_event("reconfigure", cfg=cfg)

    def set_instrument(self, stem: str) -> None:
        if stem not in STEMS:
            raise ValueError(f"unknown stem {stem!r}")
        self.instrument = stem

    def ingest_step(self, step_id: int, samples: np.ndarray) -> None:
        """Append one reassembled context step to the rolling window."""
        if len(samples) != self.cfg.step_samples:
            raise ValueError(
                f"step {step_id}: got {len(samples)} samples, "
                f"expected {self.cfg.step_samples}"
            )
        self.context_ring = shift_left(self.context_ring, self.cfg)
        self.context_ring[-self.cfg.step_samples :] = samples

    def masked_context_window(self) -> np.ndarray:
        """Window-aligned context with the unobserved future zeroed.

        The model window ends (w+1) steps after the newest observed sample,
        so the observable part is the tail of the context ring shifted to
        the window start; the remainder is the masked prediction region.
        """
        cfg = self.cfg
        boundary = generators.context_boundary_samples(cfg)
        window = np.zeros(cfg.window_samples, dtype=np.float32)
        if boundary > 0:
            window[:boundary] = self.context_ring[cfg.window_samples - boundary :]
        return window

    def run_cycle(self, step_id: int) -> CycleResult:
        """Run one generation cycle; on generator failure the rings stay
        unchanged and the cycle counts as dropped."""
        cfg = self.cfg
        t0 = time.perf_counter()
        context = self.masked_context_window()
        prior = shift_left(self.generated_ring, cfg)
        one_hot = np.array(
            [1.0 if s == self.instrument else 0.0 for s in STEMS], dtype=np.float32
        )
        req = generators.GeneratorRequest(
            context_audio=context,
            prior_target=prior,
            instrument=one_hot,
            cfg=cfg,
            step_id=step_id,
        )
        t1 = time.perf_counter()
        try:
            resp = generators.generate(self.spec, req, time_scale=self.time_scale)
        except Exception as exc:
            self.cycles_dropped += 1
            self.on_event("cycle_error", step_id=step_id, error=str(exc))
            raise
        t2 = time.perf_counter()
        prior[-cfg.step_samples :] = resp.audio[cfg.fade_samples :]
        self.generated_ring = prior
        self.cycles_run += 1
        t3 = time.perf_counter()
        timings = StageTimings(
            encode=(t1 - t0) * 1000.0,
            sampling=(t2 - t1) * 1000.0,
            decode=(t3 - t2) * 1000.0,
        )
        return CycleResult(step_id=step_id, audio=resp.audio, timings=timings)


class UdpServer:
    """Transport wrapper: /context in, /prediction out."""

    def __init__(
        self,
        cfg: WindowConfig,
        spec: generators.GeneratorSpec,
        bind_host: str = "127.0.0.1",
        recv_port: int = 0,
        client_host: str | None = None,
        send_port: int = 0,
        time_scale: float = 1.0,
        verbose: bool = False,
        on_cycle=None,
    ):
        self.core = ServerCore(cfg, spec, time_scale, on_event=self._log_event)
        self.verbose = verbose
        self.on_cycle = on_cycle
        self.client_host = client_host
        self.send_port = send_port
        timeout_s = float(cfg.T_seconds * cfg.step_ratio) * time_scale
        self.receiver = transport.ChunkReceiver(
            bind_host, recv_port, "/context", cfg.packet_size, stale_timeout_s=timeout_s
        )
        self.recv_port = self.receiver.port
        self._sender: transport.ChunkSender | None = None
        if client_host is not None and send_port:
            self._sender = transport.ChunkSender(client_host, send_port, cfg.packet_size)
        self.commands: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self._worker = threading.Thread(target=self._work, daemon=True)

    def _log_event(self, kind: str, **fields) -> None:
        if self.verbose:
            detail = " ".join(f"{k}={v}" for k, v in fields.items())
            print(f"[server] {kind} {detail}".rstrip(), flush=True)

    def start(self) -> "UdpServer":
        self.receiver.start()
        self._worker.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self._worker.join(timeout=5.0)
        self.receiver.stop()
        if self._sender is not None:
            self._sender.close()

    # commands are applied by the worker between cycles, keeping every
    # cycle on a single consistent configuration
    def request_reconfigure(self, cfg: WindowConfig, spec=None) -> None:
        self.commands.put(("reconfigure", cfg, spec))

    def request_reset(self) -> None:
        self.commands.put(("reset",))

    def request_instrument(self, stem: str) -> None:
        self.commands.put(("instrument", stem))

    def _drain_commands(self) -> None:
        while True:
            try:
                cmd = self.commands.get_nowait()
            except queue.Empty:
                return
            if cmd[0] == "reconfigure":
                self.core.reconfigure(cmd[1], cmd[2])
                self.receiver.set_packet_size(self.core.cfg.packet_size)
            elif cmd[0] == "reset":
                self.core.reset()
                self.receiver.reassembler.reset()
            elif cmd[0] == "instrument":
                self.core.set_instrument(cmd[1])

    def _work(self) -> None:
        while not self._stop.is_set():
            self._drain_commands()
            while True:
                try:
                    dropped = self.receiver.dropped.get_nowait()
                except queue.Empty:
                    break
                self.core.cycles_dropped += 1
                self._log_event("cycle_dropped", step_id=dropped, reason="timeout")
            try:
                step = self.receiver.completed.get(timeout=0.05)
            except queue.Empty:
                continue
            self._drain_commands()
            try:
                self.core.ingest_step(step.step_id, step.samples)
                result = self.core.run_cycle(step.step_id)
            except Exception as exc:
                self._log_event("cycle_error", step_id=step.step_id, error=str(exc))
                continue
            send_ms = 0.0
            sender = self._sender
            if sender is None and step.source is not None and self.send_port:
                sender = transport.ChunkSender(
                    step.source[0], self.send_port, self.core.cfg.packet_size
                )
                self._sender = sender
            if sender is not None:
                t0 = time.perf_counter()
                sender.packet_size = self.core.cfg.packet_size
                sender.send_step("/prediction", result.step_id, result.audio)
                send_ms = (time.perf_counter() - t0) * 1000.0
            timings = StageTimings(
                client_to_server=step.receive_span_ms,
                encode=result.timings.encode,
                sampling=result.timings.sampling,
                decode=result.timings.decode,
                server_to_client=send_ms,
            )
            self._log_event(
                "cycle",
                step_id=result.step_id,
                total_ms=round(sum(timings.as_dict().values()), 2),
            )
            if self.on_cycle is not None:
                self.on_cycle(result.step_id, timings)
