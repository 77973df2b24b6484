"""Multichannel RIFF/WAVE reading and writing.

Sessions exchange 4-stem files (bass, drums, guitar, piano as channels
0..3). Files are read into float32 in [-1, 1] regardless of on-disk
encoding; writing uses 32-bit float WAVE.
"""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile

from .window import STEMS

_INT_SCALES = {np.dtype(np.int16): 32768.0, np.dtype(np.int32): 2147483648.0}


def read_wav(path) -> tuple[int, np.ndarray]:
    """Read a WAVE file as (sample_rate, float32 array of shape (n, channels))."""
    sr, data = wavfile.read(path)
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype in _INT_SCALES:
        data = data.astype(np.float32) / _INT_SCALES[data.dtype]
    elif data.dtype == np.uint8:
        data = (data.astype(np.float32) - 128.0) / 128.0
    else:
        data = data.astype(np.float32)
    return sr, data


def write_wav(path, sample_rate: int, data: np.ndarray) -> None:
    """Write float32 samples of shape (n, channels) or (n,)."""
    data = np.asarray(data, dtype=np.float32)
    wavfile.write(path, sample_rate, data)


def read_stems(path, expected_rate: int | None = None) -> tuple[int, dict[str, np.ndarray]]:
    """Read a 4-channel session file into per-stem arrays."""
    sr, data = read_wav(path)
    if expected_rate is not None and sr != expected_rate:
        raise ValueError(f"{path}: sample rate {sr}, expected {expected_rate}")
    if data.shape[1] < len(STEMS):
        raise ValueError(
            f"{path}: {data.shape[1]} channels, need {len(STEMS)} ({', '.join(STEMS)})"
        )
    return sr, {stem: data[:, i].copy() for i, stem in enumerate(STEMS)}


def write_stems(path, sample_rate: int, stems: dict[str, np.ndarray]) -> None:
    """Write per-stem arrays as a 4-channel file in canonical stem order."""
    n = max(len(v) for v in stems.values())
    out = np.zeros((n, len(STEMS)), dtype=np.float32)
    for i, stem in enumerate(STEMS):
        v = stems.get(stem)
        if v is not None:
            out[: len(v), i] = v
    write_wav(path, sample_rate, out)
