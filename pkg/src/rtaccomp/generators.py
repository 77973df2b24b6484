"""Pluggable accompaniment generators.

The generator contract is model-agnostic: a request carries the masked
context window, the previously generated content placed via the window
shift, and the instrument selection; the response carries the fade
prelude followed by the newly generated step. Built-in backends are
deterministic and cheap, standing in for a trained model in end-to-end
verification and latency simulation:

    silence          all-zero output
    echo[:delay]     copies the newest observed context step (delay in samples)
    envelope         fixed-pitch tone tracking the per-latent-frame context RMS
    toy              masked-inpainting sampler over a synthetic latent codec
    wrapped:<inner>:<ms>   delegates to <inner> after blocking for <ms>

Spec strings follow the grammar above, e.g. "echo:0", "wrapped:envelope:530".
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import sampler as sampler_mod
from .window import STEMS, WindowConfig, context_mask, target_mask


class GeneratorError(ValueError):
    """Request violates the generator contract."""


@dataclass(frozen=True)
class GeneratorRequest:
    context_audio: np.ndarray  # window samples, masked region zeroed
    prior_target: np.ndarray  # window samples of previously generated content
    instrument: np.ndarray  # one-hot over STEMS
    cfg: WindowConfig
    step_id: int

    def validate(self) -> None:
        n = self.cfg.window_samples
        if len(self.context_audio) != n:
            raise GeneratorError(
                f"context_audio has {len(self.context_audio)} samples, expected {n}"
            )
        if len(self.prior_target) != n:
            raise GeneratorError(
                f"prior_target has {len(self.prior_target)} samples, expected {n}"
            )
        if len(self.instrument) != len(STEMS) or int(np.sum(self.instrument)) != 1:
            raise GeneratorError("instrument must be one-hot over the four stems")
        boundary = context_boundary_samples(self.cfg)
        if np.any(self.context_audio[boundary:] != 0):
            raise GeneratorError("context_audio must be zero beyond the context boundary")


@dataclass(frozen=True)
class GeneratorResponse:
    audio: np.ndarray  # fade prelude + step samples
    step_id: int


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    delay_samples: int = 0  # echo
    injected_delay_ms: float = 0.0  # wrapped
    inner: "GeneratorSpec | None" = None  # wrapped
    seed: int = 0
    sigma_d: float = 0.5  # toy
    tone_hz: float = 220.0  # envelope

    def __post_init__(self):
        if self.kind not in ("silence", "echo", "envelope", "toy", "wrapped"):
            raise GeneratorError(f"unknown generator kind {self.kind!r}")
        if self.injected_delay_ms < 0:
            raise GeneratorError("injected_delay_ms must be >= 0")
        if self.kind == "wrapped" and self.inner is None:
            raise GeneratorError("wrapped generator needs an inner spec")

    def describe(self) -> str:
        if self.kind == "echo":
            return f"echo:{self.delay_samples}"
        if self.kind == "wrapped":
            return f"wrapped:{self.inner.describe()}:{self.injected_delay_ms:g}"
        return self.kind


def parse_spec(text: str, seed: int = 0) -> GeneratorSpec:
    """Parse a generator selection string (CLI flag / control API)."""
    parts = text.strip().split(":")
    kind = parts[0]
    if kind == "wrapped":
        if len(parts) < 3:
            raise GeneratorError("wrapped spec needs wrapped:<inner>:<delay_ms>")
        inner = parse_spec(":".join(parts[1:-1]), seed=seed)
        return GeneratorSpec("wrapped", inner=inner, injected_delay_ms=float(parts[-1]), seed=seed)
    if kind == "echo":
        delay = int(parts[1]) if len(parts) > 1 else 0
        return GeneratorSpec("echo", delay_samples=delay, seed=seed)
    if kind in ("silence", "envelope", "toy"):
        return GeneratorSpec(kind, seed=seed)
    raise GeneratorError(f"unknown generator kind {kind!r}")


def context_boundary_samples(cfg: WindowConfig) -> int:
    """Last sample of real context within the window, in window coordinates.

    Computed in sample space, not via samples_per_frame: the window length
    need not divide evenly into latent frames (the default geometry does
    not), but step boundaries are always sample-exact.
    """
    boundary = cfg.window_samples - (cfg.lookahead_w + 1) * cfg.step_samples
    return min(max(boundary, 0), cfg.window_samples)


def response_length(cfg: WindowConfig) -> int:
    return cfg.fade_samples + cfg.step_samples


def generate(
    spec: GeneratorSpec, req: GeneratorRequest, time_scale: float = 1.0
) -> GeneratorResponse:
    """Run one generation cycle. Deterministic given (spec, seed, request).

    time_scale shrinks injected wrapped delays for accelerated sessions;
    the delay is specified in session-time milliseconds.
    """
    req.validate()
    if spec.kind == "wrapped":
        time.sleep(spec.injected_delay_ms / 1000.0 * time_scale)
        return generate(spec.inner, req, time_scale)
    if spec.kind == "silence":
        audio = np.zeros(response_length(req.cfg), dtype=np.float32)
    elif spec.kind == "echo":
        audio = _echo(spec, req)
    elif spec.kind == "envelope":
        audio = _envelope(spec, req)
    else:
        audio = _toy_sampler(spec, req)
    audio = np.asarray(audio, dtype=np.float32)
    if len(audio) != response_length(req.cfg) or not np.all(np.isfinite(audio)):
        raise GeneratorError("backend produced an invalid response payload")
    return GeneratorResponse(audio=audio, step_id=req.step_id)


def _window_slice(buf: np.ndarray, start: int, end: int) -> np.ndarray:
    """Slice with zero padding outside [0, len(buf))."""
    out = np.zeros(end - start, dtype=np.float32)
    lo, hi = max(start, 0), min(end, len(buf))
    if hi > lo:
        out[lo - start : hi - start] = buf[lo:hi]
    return out


def _echo(spec: GeneratorSpec, req: GeneratorRequest) -> np.ndarray:
    # copy the newest real context step (the step ending at the context
    # boundary), with the fade prelude taken from the samples before it
    cfg = req.cfg
    end = context_boundary_samples(cfg) - spec.delay_samples
    start = end - cfg.step_samples - cfg.fade_samples
    return _window_slice(req.context_audio, start, end)


def _envelope(spec: GeneratorSpec, req: GeneratorRequest) -> np.ndarray:
    # fixed-pitch tone whose amplitude per latent frame matches the RMS of
    # the newest observed context frames (echo at frame granularity)
    cfg = req.cfg
    spf = cfg.samples_per_frame
    boundary_frame = context_mask(cfg).boundary_frame
    need = response_length(cfg)
    n_frames = -(-need // spf) + 1
    first_src_frame = boundary_frame - n_frames

    # snap the tone so each frame holds a whole number of cycles; the frame
    # RMS of A*sin over whole cycles is exactly A/sqrt(2)
    cycles = max(1, round(spec.tone_hz * spf / cfg.sample_rate))
    phase = 2.0 * np.pi * cycles * np.arange(spf) / spf

    frames = []
    for k in range(n_frames):
        src = first_src_frame + k
        if 0 <= src < cfg.latent_frames:
            seg = req.context_audio[src * spf : (src + 1) * spf]
            rms = float(np.sqrt(np.mean(np.square(seg, dtype=np.float64))))
        else:
            rms = 0.0
        frames.append((rms * np.sqrt(2.0)) * np.sin(phase))
    out = np.concatenate(frames)
    return out[-need:]


def _codec_encode(audio: np.ndarray, cfg: WindowConfig) -> np.ndarray:
    """Synthetic latent codec: per-frame mean in bin 0, frame RMS in bin 1."""
    spf = cfg.samples_per_frame
    frames = audio[: cfg.latent_frames * spf].reshape(cfg.latent_frames, spf)
    grid = np.zeros((cfg.latent_frames, cfg.latent_bins), dtype=np.float64)
    grid[:, 0] = frames.mean(axis=1)
    if cfg.latent_bins > 1:
        grid[:, 1] = np.sqrt(np.mean(np.square(frames, dtype=np.float64), axis=1))
    return grid


def _codec_decode(grid: np.ndarray, cfg: WindowConfig) -> np.ndarray:
    """Piecewise-constant synthesis from bin 0."""
    return np.repeat(grid[:, 0], cfg.samples_per_frame).astype(np.float32)


def _toy_sampler(spec: GeneratorSpec, req: GeneratorRequest) -> np.ndarray:
    cfg = req.cfg
    z_context = _codec_encode(req.context_audio, cfg)
    z_context *= context_mask(cfg).grid(cfg.latent_bins)
    z_prior = _codec_encode(req.prior_target, cfg)

    boundary = target_mask(cfg)
    inpaint = sampler_mod.InpaintSpec(
        target_boundary=boundary, fixed_content=z_prior, resamples=2
    )
    g = sampler_mod.gaussian_denoiser(mu=z_context, sigma_d=spec.sigma_d)
    sched = sampler_mod.karras_schedule(5)
    cond = {"instrument": req.instrument, "context": z_context}
    z = sampler_mod.sample_inpaint(
        g, sched, inpaint, seed=spec.seed + req.step_id, cond=cond, substeps=8
    )
    window_audio = _codec_decode(z, cfg)
    window_audio = np.clip(window_audio, -1.0, 1.0)
    return window_audio[-response_length(cfg):]
