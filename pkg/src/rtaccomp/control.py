"""Session management, operator commands, and metrics export.

PerformanceSession ties the engine, the UDP transport, and (optionally)
an in-process server into one steerable unit. Operators drive it through
ControlCommand-shaped requests, either directly via ``handle`` or over
the TCP control endpoint (newline-delimited JSON, request/response plus
server-push metric events). Every prediction cycle yields exactly one
MetricEvent, completed or dropped; late subscribers receive the last 256.

Parameter changes are staged and applied atomically at the next step
boundary, so no cycle ever runs on a mixed configuration.
"""

from __future__ import annotations

import collections
import json
import queue
import socket
import threading
import time
from dataclasses import dataclass

import numpy as np

from . import audiofile, engine, generators, transport
from .latency import StageTimings
from .server import UdpServer
from .window import STEMS, ConfigError, WindowConfig

METRIC_BACKLOG = 256


@dataclass(frozen=True)
class MetricEvent:
    step_id: int
    stages: StageTimings
    underrun: bool
    rt_budget_ms: float
    total_ms: float
    timestamp: float
    dropped: bool = False
    stem: str = ""

    def as_dict(self) -> dict:
        return {
            "step_id": self.step_id,
            "stages": self.stages.as_dict(),
            "underrun": self.underrun,
            "rt_budget_ms": self.rt_budget_ms,
            "total_ms": self.total_ms,
            "timestamp": self.timestamp,
            "dropped": self.dropped,
            "stem": self.stem,
        }


class CommandError(ValueError):
    """Rejected control command, with a human-readable reason."""


class PerformanceSession:
    """One streaming session: playback clock, transport, metrics.

    ``stems`` maps the four stem names to input audio; the predicted
    stem's input channel is ignored (treated as absent). ``time_scale``
    compresses session time for accelerated runs: all budgets and
    injected delays are stated in session time and slept scaled.
    """

    def __init__(
        self,
        cfg: WindowConfig,
        stems: dict[str, np.ndarray],
        predicted_stem: str = "bass",
        generator: str = "echo:0",
        time_scale: float = 1.0,
        block_size: int = 1024,
        server_host: str | None = None,
        server_recv_port: int = 0,
        client_recv_port: int = 0,
        verbose: bool = False,
    ):
        self.time_scale = time_scale
        self.block_size = block_size
        self.verbose = verbose
        self.input_length = max((len(v) for v in stems.values()), default=0)
        capacity = self.input_length + (abs(cfg.lookahead_w) + 2) * cfg.window_samples
        self.buffer = engine.StepBuffer(capacity, predicted_stem)
        self.state = engine.SessionState(cfg=cfg, predicted_stem=predicted_stem)
        self._inputs = {s: np.asarray(v, dtype=np.float32) for s, v in stems.items()}

        self.listener = transport.ChunkReceiver(
            "127.0.0.1", client_recv_port, "/prediction", cfg.packet_size
        ).start()
        self._server_timings: dict[int, StageTimings] = {}
        self.server: UdpServer | None = None
        if server_host is None:
            self.server = UdpServer(
                cfg,
                generators.parse_spec(generator),
                client_host="127.0.0.1",
                send_port=self.listener.port,
                time_scale=time_scale,
                verbose=verbose,
                on_cycle=self._on_server_cycle,
            ).start()
            server_host, server_recv_port = "127.0.0.1", self.server.recv_port
        self.sender = transport.ChunkSender(server_host, server_recv_port, cfg.packet_size)

        self.playing = False
        self.finished = False
        self._stop = threading.Event()
        self._pending_cfg: WindowConfig | None = None
        self._send_times: dict[int, float] = {}
        self._metrics: collections.deque[MetricEvent] = collections.deque(
            maxlen=METRIC_BACKLOG
        )
        self._subscribers: list[queue.Queue] = []
        self._lock = threading.RLock()
        self._thread: threading.Thread | None = None

    # ------------------------------------------------------------- metrics

    def _on_server_cycle(self, step_id: int, timings: StageTimings) -> None:
        self._server_timings[step_id] = timings

    def subscribe(self) -> queue.Queue:
        """Metric push channel; primed with the backlog (last 256 events)."""
        q: queue.Queue = queue.Queue()
        with self._lock:
            for ev in self._metrics:
                q.put(ev)
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def metrics(self) -> list[MetricEvent]:
        with self._lock:
            return list(self._metrics)

    def _emit(self, event: MetricEvent) -> None:
        with self._lock:
            self._metrics.append(event)
            for q in self._subscribers:
                q.put(event)

    # ------------------------------------------------------------- session loop

    def start(self) -> "PerformanceSession":
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        return self

    def close(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=10.0)
        self.listener.stop()
        self.sender.close()
        if self.server is not None:
            self.server.stop()

    def run_to_completion(self, timeout: float = 300.0) -> None:
        """Blocking run: play the whole input, then drain in-flight cycles."""
        self.playing = True
        if self._thread is None:
            self.start()
        deadline = time.monotonic() + timeout
        while not self.finished and time.monotonic() < deadline:
            time.sleep(0.01)
        if not self.finished:
            raise TimeoutError("session did not finish in time")

    def _block_at(self, cursor: int) -> dict[str, np.ndarray] | None:
        if cursor >= self.input_length:
            return None
        end = min(cursor + self.block_size, self.input_length)
        block = {}
        for stem in STEMS:
            if stem == self.state.predicted_stem:
                continue
            src = self._inputs.get(stem)
            if src is None:
                block[stem] = np.zeros(end - cursor, dtype=np.float32)
            else:
                seg = src[cursor:end]
                if len(seg) < end - cursor:
                    seg = np.pad(seg, (0, end - cursor - len(seg)))
                block[stem] = seg
        return block

    def _run(self) -> None:
        sr = self.state.cfg.sample_rate
        anchor_wall = time.perf_counter()
        anchor_pos = self.state.playback_cursor
        while not self._stop.is_set():
            self._drain_predictions()
            if not self.playing:
                time.sleep(0.005)
                anchor_wall = time.perf_counter()
                anchor_pos = self.state.playback_cursor
                continue
            block = self._block_at(self.state.playback_cursor)
            if block is None:
                # input exhausted: allow in-flight cycles to land, then stop
                self._drain_predictions()
                if not self.state.outstanding or self._stop.is_set():
                    break
                time.sleep(0.005)
                continue
            actions = engine.on_audio_block(self.state, self.buffer, block)
            for action in actions:
                if action.kind is engine.ActionKind.SEND_CONTEXT:
                    self._dispatch_cycle(action.curr)
            # absolute-deadline pacing in scaled session time
            target = anchor_wall + (
                (self.state.playback_cursor - anchor_pos) / sr
            ) * self.time_scale
            delay = target - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
        self.playing = False
        self.finished = True

    def _apply_pending(self, curr: int) -> None:
        if self._pending_cfg is None:
            return
        cfg = self._pending_cfg
        self._pending_cfg = None
        self.state.cfg = cfg
        self.state.next_boundary = curr + cfg.step_samples
        self.sender.packet_size = cfg.packet_size
        self.listener.set_packet_size(cfg.packet_size)
        if self.server is not None:
            self.server.request_reconfigure(cfg)

    def _dispatch_cycle(self, curr: int) -> None:
        with self._lock:
            self._apply_pending(curr)
            cfg = self.state.cfg
            step_id = self.state.next_step_id
            self.state.next_step_id += 1
            context = engine.capture_context(self.state, self.buffer, curr)
            self.state.outstanding[step_id] = (curr, cfg)
            self._send_times[step_id] = time.perf_counter()
        self.sender.send_step("/context", step_id, context)

    def _drain_predictions(self) -> None:
        while True:
            try:
                done = self.listener.completed.get_nowait()
            except queue.Empty:
                break
            with self._lock:
                self._commit(done)
        while True:
            try:
                dropped_id = self.listener.dropped.get_nowait()
            except queue.Empty:
                break
            self._emit_dropped(dropped_id)
        with self._lock:
            self._expire_outstanding()

    def _commit(self, done: transport.CompletedStep) -> None:
        stored = self.state.outstanding.get(done.step_id)
        if stored is None:
            return  # duplicate or already-expired step
        curr, cfg = stored
        write_start = curr + cfg.lookahead_w * cfg.step_samples
        late = (
            write_start >= self.state.warmup_end
            and self.state.playback_cursor > write_start
        )
        try:
            committed = engine.commit_prediction(
                self.state, self.buffer, done.step_id, done.samples
            )
        except engine.EngineError:
            self._emit_dropped(done.step_id)
            return
        if not committed:
            return
        sent = self._send_times.pop(done.step_id, None)
        wall_total = (
            (time.perf_counter() - sent) * 1000.0 / max(self.time_scale, 1e-9)
            if sent is not None
            else 0.0
        )
        stages = self._server_timings.pop(done.step_id, None)
        if stages is None:
            stages = StageTimings(sampling=wall_total)
        self._emit(
            MetricEvent(
                step_id=done.step_id,
                stages=stages,
                underrun=late,
                rt_budget_ms=cfg.budget_ms,
                total_ms=wall_total,
                timestamp=time.time(),
                stem=self.state.predicted_stem,
            )
        )

    def _expire_outstanding(self) -> None:
        # a cycle whose write region is already a full step behind playback
        # will never be useful; report it as dropped
        for step_id in list(self.state.outstanding):
            curr, cfg = self.state.outstanding[step_id]
            _, end = (
                curr + cfg.lookahead_w * cfg.step_samples,
                curr + (cfg.lookahead_w + 1) * cfg.step_samples,
            )
            if self.state.playback_cursor > end + cfg.step_samples:
                del self.state.outstanding[step_id]
                self._emit_dropped(step_id, cfg)

    def _emit_dropped(self, step_id: int, cfg: WindowConfig | None = None) -> None:
        cfg = cfg or self.state.cfg
        self._send_times.pop(step_id, None)
        self._emit(
            MetricEvent(
                step_id=step_id,
                stages=StageTimings(),
                underrun=True,
                rt_budget_ms=cfg.budget_ms,
                total_ms=0.0,
                timestamp=time.time(),
                dropped=True,
                stem=self.state.predicted_stem,
            )
        )

    # ------------------------------------------------------------- commands

    def handle(self, cmd: dict) -> dict:
        """Execute one control command; returns a structured reply.

        Raises CommandError with the rejection reason for invalid input.
        """
        name = cmd.get("cmd")
        if name == "set_params":
            return self._cmd_set_params(cmd.get("params", {}))
        if name == "select_instrument":
            return self._cmd_select_instrument(cmd.get("stem"))
        if name == "play":
            self.playing = True
            return {"playing": True}
        if name == "stop":
            self.playing = False
            return {"playing": False}
        if name == "next":
            return self._cmd_next()
        if name == "clean":
            return self._cmd_clean()
        if name == "write":
            return self._cmd_write(cmd.get("path"))
        if name == "verbose":
            self.verbose = bool(cmd.get("on", True))
            if self.server is not None:
                self.server.verbose = self.verbose
            return {"verbose": self.verbose}
        if name == "get_state":
            return self.describe()
        raise CommandError(f"unknown command {name!r}")

    def _cmd_set_params(self, params: dict) -> dict:
        allowed = {"step_ratio", "lookahead_w", "fade_samples", "packet_size"}
        unknown = set(params) - allowed
        if unknown:
            raise CommandError(f"unknown parameters: {sorted(unknown)}")
        try:
            new_cfg = self.state.cfg.with_params(**params)
        except (ConfigError, ValueError, ZeroDivisionError) as exc:
            raise CommandError(str(exc)) from exc
        self._pending_cfg = new_cfg
        return {"staged": True, "applies_at": self.state.next_boundary}

    def _cmd_select_instrument(self, stem) -> dict:
        if stem not in STEMS:
            raise CommandError(f"unknown stem {stem!r}")
        self.state.predicted_stem = stem
        self.buffer.predicted_stem = stem
        self.buffer.committed[:] = False
        if self.server is not None:
            self.server.request_instrument(stem)
        return {"predicted_stem": stem}

    def _cmd_next(self) -> dict:
        """Manually trigger one prediction cycle at the pending boundary."""
        curr = self.state.next_boundary
        self.state.next_boundary += self.state.cfg.step_samples
        self._dispatch_cycle(curr)
        if not self.playing:
            # service the cycle ourselves while the clock is gated
            deadline = time.monotonic() + 10.0
            step_id = self.state.next_step_id - 1
            while step_id in self.state.outstanding and time.monotonic() < deadline:
                self._drain_predictions()
                time.sleep(0.002)
        return {"triggered": True, "curr": curr}

    def _cmd_clean(self) -> dict:
        self.buffer.stems[self.state.predicted_stem][:] = 0
        self.buffer.committed[:] = False
        self.state.outstanding.clear()
        self.state.committed_steps.clear()
        self.state.underruns = 0
        if self.server is not None:
            self.server.request_reset()
        return {"cleaned": True}

    def _cmd_write(self, path) -> dict:
        if not path:
            raise CommandError("write requires a path")
        out = {
            stem: (
                self.buffer.stems[stem][: self.input_length]
                if stem == self.state.predicted_stem
                else self._inputs.get(stem, np.zeros(0, dtype=np.float32))
            )
            for stem in STEMS
        }
        audiofile.write_stems(path, self.state.cfg.sample_rate, out)
        return {"written": str(path)}

    def describe(self) -> dict:
        cfg = self.state.cfg
        r = cfg.step_ratio
        return {
            "params": {
                "T_seconds": cfg.T_seconds,
                "sample_rate": cfg.sample_rate,
                "step_ratio": f"{r.numerator}/{r.denominator}",
                "lookahead_w": cfg.lookahead_w,
                "fade_samples": cfg.fade_samples,
                "packet_size": cfg.packet_size,
                "latent_frames": cfg.latent_frames,
                "latent_bins": cfg.latent_bins,
            },
            "predicted_stem": self.state.predicted_stem,
            "playing": self.playing,
            "finished": self.finished,
            "playback_cursor": self.state.playback_cursor,
            "underruns": self.state.underruns,
            "rt_budget_ms": cfg.budget_ms,
            "waveforms": {
                "mixture": _decimate(self._mixture_preview(), 2000),
                "predicted": _decimate(
                    self.buffer.stems[self.state.predicted_stem][
                        : max(self.state.playback_cursor, 1)
                    ],
                    2000,
                ),
            },
        }

    def _mixture_preview(self) -> np.ndarray:
        end = max(self.state.playback_cursor, 1)
        total = np.zeros(end, dtype=np.float32)
        for stem in STEMS:
            if stem == self.state.predicted_stem:
                continue
            total += self.buffer.stems[stem][:end]
        return np.clip(total, -1.0, 1.0)


def _decimate(samples: np.ndarray, max_points: int) -> list[float]:
    """Peak-decimate a waveform to at most max_points values."""
    n = len(samples)
    if n == 0:
        return []
    if n <= max_points:
        return [float(x) for x in samples]
    hop = -(-n // max_points)
    padded = np.pad(samples, (0, hop * max_points - n))
    blocks = padded.reshape(max_points, hop)
    peaks = blocks[np.arange(max_points), np.abs(blocks).argmax(axis=1)]
    return [float(x) for x in peaks]


class ControlServer:
    """Newline-delimited JSON control endpoint.

    Requests: {"id": n, "cmd": ..., ...} -> {"id": n, "ok": true, "result": ...}
    or {"id": n, "ok": false, "error": reason}. Metric events are pushed as
    {"event": "metric", "data": ...}; connecting replays the backlog.
    """

    def __init__(self, session: PerformanceSession, host: str = "127.0.0.1", port: int = 0):
        self.session = session
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(4)
        self.port = self._sock.getsockname()[1]
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._accept_thread = threading.Thread(target=self._accept, daemon=True)

    def start(self) -> "ControlServer":
        self._accept_thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        try:
            self._sock.close()
        except OSError:
            pass

    def _accept(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                break
            t = threading.Thread(target=self._serve, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _serve(self, conn: socket.socket) -> None:
        events = self.session.subscribe()
        send_lock = threading.Lock()

        def send(obj: dict) -> None:
            with send_lock:
                conn.sendall((json.dumps(obj) + "\n").encode())

        def pusher() -> None:
            while not self._stop.is_set():
                try:
                    ev = events.get(timeout=0.2)
                except queue.Empty:
                    continue
                try:
                    send({"event": "metric", "data": ev.as_dict()})
                except OSError:
                    break

        push_thread = threading.Thread(target=pusher, daemon=True)
        push_thread.start()
        try:
            buf = b""
            while not self._stop.is_set():
                data = conn.recv(65536)
                if not data:
                    break
                buf += data
                while b"\n" in buf:
                    line, buf = buf.split(b"\n", 1)
                    if not line.strip():
                        continue
                    try:
                        req = json.loads(line)
                    except json.JSONDecodeError:
                        send({"ok": False, "error": "malformed JSON"})
                        continue
                    rid = req.get("id")
                    try:
                        result = self.session.handle(req)
                        send({"id": rid, "ok": True, "result": result})
                    except CommandError as exc:
                        send({"id": rid, "ok": False, "error": str(exc)})
        except OSError:
            pass
        finally:
            self.session.unsubscribe(events)
            conn.close()
