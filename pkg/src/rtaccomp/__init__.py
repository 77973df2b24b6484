"""Real-time accompaniment streaming over a sliding look-ahead window."""

from .window import WindowConfig, context_mask, target_mask  # noqa: F401

__version__ = "0.1.0"
