"""Sliding-window geometry.

Everything the streaming loop needs to agree on lives here: the window
configuration, step boundaries, context read and prediction write
intervals, the left-shift that advances the window, and the binary
context/target masks on the latent frame grid.

The step ratio is stored as an exact Fraction so boundary arithmetic
never drifts; configs that would put a step boundary between latent
frames (or between audio samples) are rejected at construction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

STEMS = ("bass", "drums", "guitar", "piano")


class ConfigError(ValueError):
    """Window configuration violates a structural invariant."""


def parse_ratio(value) -> Fraction:
    """Parse a step ratio from a Fraction, "n/d" string, int, or float."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        if "/" in value:
            num, den = value.split("/", 1)
            return Fraction(int(num), int(den))
        return Fraction(value)
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value).limit_denominator(1 << 16)
    raise ConfigError(f"cannot parse step ratio from {value!r}")


@dataclass(frozen=True)
class WindowConfig:
    """Streaming geometry shared by client and server.

    T_seconds: receptive-field duration; sample_rate in Hz;
    latent_frames x latent_bins is the latent grid the masks live on;
    step_ratio r is the fraction of the window advanced per cycle;
    lookahead_w places the predicted window relative to playback.
    """

    T_seconds: float = 6.0
    sample_rate: int = 44100
    latent_frames: int = 64
    latent_bins: int = 64
    step_ratio: Fraction = Fraction(1, 4)
    lookahead_w: int = 1
    fade_samples: int = 882
    packet_size: int = 4410

    def __post_init__(self):
        object.__setattr__(self, "step_ratio", parse_ratio(self.step_ratio))
        r = self.step_ratio
        if not 0 < r <= 1:
            raise ConfigError(f"step_ratio must be in (0, 1], got {r}")
        if self.latent_frames <= 0 or self.latent_bins <= 0:
            raise ConfigError("latent grid dimensions must be positive")
        if (self.latent_frames * r).denominator != 1:
            raise ConfigError(
                f"step must align to the latent grid: {self.latent_frames} * {r} "
                "is not an integer number of frames"
            )
        samples = Fraction(self.T_seconds).limit_denominator() * self.sample_rate
        if samples.denominator != 1 or samples <= 0:
            raise ConfigError("T_seconds * sample_rate must be a positive integer")
        if (samples * r).denominator != 1:
            raise ConfigError(
                f"step must cover a whole number of samples: {samples} * {r}"
            )
        if (self.lookahead_w + 1) * r > 1:
            raise ConfigError(
                f"prediction window extends past the receptive field: "
                f"(w+1)*r = {(self.lookahead_w + 1) * r} > 1"
            )
        if self.fade_samples < 0 or self.fade_samples >= int(samples * r):
            raise ConfigError(
                f"fade_samples must be in [0, step): got {self.fade_samples} "
                f"with step {int(samples * r)}"
            )
        if self.packet_size <= 0:
            raise ConfigError("packet_size must be positive")

    @property
    def window_samples(self) -> int:
        return int(Fraction(self.T_seconds).limit_denominator() * self.sample_rate)

    @property
    def step_samples(self) -> int:
        return int(self.window_samples * self.step_ratio)

    @property
    def step_frames(self) -> int:
        return int(self.latent_frames * self.step_ratio)

    @property
    def samples_per_frame(self) -> int:
        return self.window_samples // self.latent_frames

    @property
    def budget_ms(self) -> float:
        """Real-time latency budget: one step duration."""
        return float(self.T_seconds * self.step_ratio * 1000.0)

    def with_params(self, **changes) -> "WindowConfig":
        if "step_ratio" in changes:
            changes["step_ratio"] = parse_ratio(changes["step_ratio"])
        return replace(self, **changes)


@dataclass(frozen=True)
class MaskBoundary:
    """Latent frames with t < boundary_frame are visible (mask = 1)."""

    boundary_frame: int
    total_frames: int

    def vector(self) -> np.ndarray:
        """Per-frame mask as a boolean vector of length total_frames."""
        return np.arange(self.total_frames) < self.boundary_frame

    def grid(self, bins: int) -> np.ndarray:
        """Mask broadcast over the frequency axis: (frames, bins)."""
        return np.repeat(self.vector()[:, None], bins, axis=1)


def context_mask(cfg: WindowConfig) -> MaskBoundary:
    """Visibility boundary of the conditioning context.

    Frames at or beyond T_z - T_z*r*(w+1) cover audio the performer has
    not produced yet and are zeroed. Deep retrospection (w <= -1) leaves
    the whole window visible.
    """
    tz = cfg.latent_frames
    boundary = tz - tz * cfg.step_ratio * (cfg.lookahead_w + 1)
    boundary = min(max(boundary, 0), tz)
    return MaskBoundary(int(boundary), tz)


def target_mask(cfg: WindowConfig) -> MaskBoundary:
    """Generation boundary: frames at or beyond T_z - T_z*r are synthesized."""
    tz = cfg.latent_frames
    return MaskBoundary(int(tz - tz * cfg.step_ratio), tz)


def context_read_interval(curr: int, cfg: WindowConfig) -> tuple[int, int]:
    """Sample interval [curr - r*T*sr, curr) read and sent at boundary curr.

    The first cycle (curr = 0) yields a negative start, realized by the
    caller as zero padding.
    """
    return curr - cfg.step_samples, curr


def write_interval(curr: int, cfg: WindowConfig) -> tuple[int, int]:
    """Sample interval [curr + w*r*T*sr, curr + (w+1)*r*T*sr) the prediction
    for boundary curr is committed to."""
    step = cfg.step_samples
    return curr + cfg.lookahead_w * step, curr + (cfg.lookahead_w + 1) * step


def step_boundaries(cfg: WindowConfig, n: int) -> list[int]:
    """First n step boundaries in absolute samples: 0, step, 2*step, ..."""
    return [k * cfg.step_samples for k in range(n)]


def shift_left(buffer: np.ndarray, cfg: WindowConfig) -> np.ndarray:
    """Advance a window buffer by one step, zero-filling the vacated tail.

    Accepts an audio buffer of length T*sr (shifted by r*T*sr samples) or a
    latent buffer whose first dimension is T_z (shifted by r*T_z frames).
    """
    buffer = np.asarray(buffer)
    if buffer.shape[0] == cfg.window_samples and buffer.ndim == 1:
        shift = cfg.step_samples
    elif buffer.shape[0] == cfg.latent_frames:
        shift = cfg.step_frames
    else:
        raise ValueError(
            f"buffer length {buffer.shape[0]} matches neither the audio window "
            f"({cfg.window_samples}) nor the latent grid ({cfg.latent_frames})"
        )
    out = np.zeros_like(buffer)
    out[: buffer.shape[0] - shift] = buffer[shift:]
    return out


_CONFIG_FIELDS = {
    "T_seconds": float,
    "sample_rate": int,
    "latent_frames": int,
    "latent_bins": int,
    "step_ratio": parse_ratio,
    "lookahead_w": int,
    "fade_samples": int,
    "packet_size": int,
}


def load_config(path) -> WindowConfig:
    """Load a WindowConfig from a key = value text file.

    Unknown keys are rejected; missing keys fall back to defaults.
    Lines starting with '#' are comments.
    """
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in _CONFIG_FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _CONFIG_FIELDS[key](raw)
    return WindowConfig(**values)


def save_config(cfg: WindowConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"T_seconds = {cfg.T_seconds}\n")
        fh.write(f"sample_rate = {cfg.sample_rate}\n")
        fh.write(f"latent_frames = {cfg.latent_frames}\n")
        fh.write(f"latent_bins = {cfg.latent_bins}\n")
        fh.write(f"step_ratio = {cfg.step_ratio.numerator}/{cfg.step_ratio.denominator}\n")
        fh.write(f"lookahead_w = {cfg.lookahead_w}\n")
        fh.write(f"fade_samples = {cfg.fade_samples}\n")
        fh.write(f"packet_size = {cfg.packet_size}\n")
