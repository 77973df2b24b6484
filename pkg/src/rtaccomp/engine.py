"""Client-side performance engine.

Replaces the host-environment audio patch: a block clock advances the
playback cursor over a shared multichannel step buffer, detects step
boundaries, captures and mixes context for the server, and commits
returned predictions with a linear crossfade. All buffer mutation is
serialized through the block-processing owner; the network listener only
queues completed predictions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .window import (
    STEMS,
    WindowConfig,
    context_read_interval,
    write_interval,
)


class EngineError(ValueError):
    pass


class ActionKind(enum.Enum):
    SEND_CONTEXT = "send_context"
    UNDERRUN = "underrun"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    curr: int | None = None  # step boundary, for SEND_CONTEXT
    region: tuple[int, int] | None = None  # uncovered samples, for UNDERRUN


class StepBuffer:
    """Per-stem sample arrays indexed by absolute position.

    Input stems are append-only at the playback head; the predicted stem
    is written only by prediction commits, tracked by a committed-region
    map so playback can detect uncovered regions.
    """

    def __init__(self, capacity: int, predicted_stem: str):
        if predicted_stem not in STEMS:
            raise EngineError(f"unknown stem {predicted_stem!r}")
        self.capacity = capacity
        self.predicted_stem = predicted_stem
        self.stems = {s: np.zeros(capacity, dtype=np.float32) for s in STEMS}
        self.committed = np.zeros(capacity, dtype=bool)
        self.input_head = 0

    def append_inputs(self, block: dict[str, np.ndarray]) -> None:
        n = None
        for stem, samples in block.items():
            if stem == self.predicted_stem:
                continue
            if n is None:
                n = len(samples)
            end = min(self.input_head + len(samples), self.capacity)
            self.stems[stem][self.input_head : end] = samples[: end - self.input_head]
        self.input_head += n if n is not None else 0

    def slice(self, stem: str, start: int, end: int) -> np.ndarray:
        out = np.zeros(end - start, dtype=np.float32)
        lo, hi = max(start, 0), min(end, self.capacity)
        if hi > lo:
            out[lo - start : hi - start] = self.stems[stem][lo:hi]
        return out


@dataclass
class SessionState:
    cfg: WindowConfig
    predicted_stem: str = "bass"
    playback_cursor: int = 0
    mode: str = "file"  # file-driven or live
    underruns: int = 0
    next_boundary: int = 0
    next_step_id: int = 0
    # per-step bookkeeping: step_id -> (curr, cfg at capture time)
    outstanding: dict[int, tuple[int, WindowConfig]] = field(default_factory=dict)
    committed_steps: set[int] = field(default_factory=set)

    @property
    def warmup_end(self) -> int:
        """First sample after the structurally silent warm-up of (w+1) steps."""
        return (self.cfg.lookahead_w + 1) * self.cfg.step_samples


def on_audio_block(
    state: SessionState, buffer: StepBuffer, block: dict[str, np.ndarray]
) -> list[Action]:
    """Advance the clock by one host block.

    Emits SEND_CONTEXT when the cursor crosses a step boundary and
    UNDERRUN when playback reaches uncommitted predicted-stem samples
    past the warm-up region.
    """
    sizes = {len(v) for v in block.values()}
    if len(sizes) != 1:
        raise EngineError("all stems in a block must have the same length")
    n = sizes.pop()

    actions: list[Action] = []
    # boundary check happens before playing the block, so the boundary at
    # the current cursor fires first (including curr = 0 at session start)
    while state.playback_cursor >= state.next_boundary:
        actions.append(Action(ActionKind.SEND_CONTEXT, curr=state.next_boundary))
        state.next_boundary += state.cfg.step_samples

    start, end = state.playback_cursor, state.playback_cursor + n
    buffer.append_inputs(block)
    lo = max(start, state.warmup_end)
    if lo < end and end <= buffer.capacity:
        uncovered = ~buffer.committed[lo:end]
        if uncovered.any():
            state.underruns += 1
            idx = np.flatnonzero(uncovered)
            actions.append(
                Action(
                    ActionKind.UNDERRUN,
                    region=(lo + int(idx[0]), lo + int(idx[-1]) + 1),
                )
            )
    state.playback_cursor = end
    return actions


def mixdown(state: SessionState, buffer: StepBuffer, interval: tuple[int, int]) -> np.ndarray:
    """Sum all non-predicted stems over the interval, clamped to [-1, 1].

    Negative positions (first cycle) read as zeros.
    """
    start, end = interval
    total = np.zeros(end - start, dtype=np.float32)
    for stem in STEMS:
        if stem == state.predicted_stem:
            continue
        total += buffer.slice(stem, start, end)
    return np.clip(total, -1.0, 1.0)


def capture_context(state: SessionState, buffer: StepBuffer, curr: int) -> np.ndarray:
    return mixdown(state, buffer, context_read_interval(curr, state.cfg))


def commit_prediction(
    state: SessionState,
    buffer: StepBuffer,
    step_id: int,
    audio: np.ndarray,
    curr: int | None = None,
    cfg: WindowConfig | None = None,
) -> bool:
    """Write a returned prediction into the predicted stem.

    The step body lands on its write interval; the fade prelude crossfades
    with the existing tail (new * alpha + old * (1 - alpha), alpha ramping
    (i+1)/fade). Returns False when the commit is dropped (duplicate or
    entirely stale); raises on length mismatch.
    """
    if curr is None or cfg is None:
        stored = state.outstanding.get(step_id)
        if stored is None:
            if step_id in state.committed_steps:
                return False
            raise EngineError(f"no outstanding request for step {step_id}")
        curr, cfg = stored
    if step_id in state.committed_steps:
        return False
    expected = cfg.fade_samples + cfg.step_samples
    if len(audio) != expected:
        raise EngineError(
            f"step {step_id}: prediction has {len(audio)} samples, expected {expected}"
        )
    start, end = write_interval(curr, cfg)
    if end <= state.playback_cursor - cfg.step_samples or end <= 0:
        # musically useless: the region is fully in the past
        state.outstanding.pop(step_id, None)
        return False

    fade = cfg.fade_samples
    body = np.asarray(audio[fade:], dtype=np.float32)
    hi = min(end, buffer.capacity)
    if start < hi:
        buffer.stems[state.predicted_stem][start:hi] = body[: hi - start]
        buffer.committed[start:hi] = True
    if fade > 0 and start - fade >= 0:
        alpha = (np.arange(fade, dtype=np.float32) + 1.0) / fade
        old = buffer.stems[state.predicted_stem][start - fade : start]
        new = np.asarray(audio[:fade], dtype=np.float32)
        buffer.stems[state.predicted_stem][start - fade : start] = (
            new * alpha + old * (1.0 - alpha)
        )
    state.committed_steps.add(step_id)
    state.outstanding.pop(step_id, None)
    return True
