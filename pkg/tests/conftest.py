import numpy as np
import pytest

from rtaccomp.window import WindowConfig


@pytest.fixture
def default_cfg():
    """The deployed default geometry: 6 s window at 44.1 kHz, 64x64 latent."""
    return WindowConfig()


@pytest.fixture
def small_cfg():
    """Fast geometry for integration tests: 1 s window, 4 chunks per step."""
    return WindowConfig(
        T_seconds=1.0,
        sample_rate=8000,
        latent_frames=16,
        latent_bins=8,
        step_ratio="1/4",
        lookahead_w=1,
        fade_samples=40,
        packet_size=500,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
