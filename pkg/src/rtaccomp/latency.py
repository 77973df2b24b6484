"""Full-cycle latency accounting and real-time feasibility analysis.

A prediction cycle is five sequential stages (client->server transfer,
encode, sampling, decode, server->client transfer). Playback is
uninterrupted when the full cycle d stays under the step duration
T*r. The cycle model d(r) = d_compute + c*r separates r-independent
compute cost from transfer that scales with chunk size; remote links
additionally impose a per-direction round-trip floor.

All durations are milliseconds; r is dimensionless.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

from .window import WindowConfig


@dataclass(frozen=True)
class StageTimings:
    """Measured per-stage durations of one cycle, in milliseconds."""

    client_to_server: float = 0.0
    encode: float = 0.0
    sampling: float = 0.0
    decode: float = 0.0
    server_to_client: float = 0.0
    forward_passes: int | None = None

    def __post_init__(self):
        for name in ("client_to_server", "encode", "sampling", "decode", "server_to_client"):
            if getattr(self, name) < 0:
                raise ValueError(f"stage {name} must be >= 0")

    def as_dict(self) -> dict:
        return {
            "client_to_server": self.client_to_server,
            "encode": self.encode,
            "sampling": self.sampling,
            "decode": self.decode,
            "server_to_client": self.server_to_client,
        }


def full_cycle(st: StageTimings) -> float:
    """Total cycle duration: sum of the five stages."""
    return (
        st.client_to_server + st.encode + st.sampling + st.decode + st.server_to_client
    )


@dataclass(frozen=True)
class LatencyModel:
    """d(r) = d_compute + c*r, with an optional per-direction network floor.

    d_compute collects all r-independent costs (encode, sampling, decode);
    c is the transfer coefficient in ms per unit r; network_floor is the
    per-direction minimum transfer time on remote topologies.
    """

    d_compute: float
    c: float
    network_floor: float = 0.0

    def __post_init__(self):
        if self.d_compute < 0 or self.c < 0 or self.network_floor < 0:
            raise ValueError("latency model parameters must be >= 0")


@dataclass(frozen=True)
class FeasibilityReport:
    d_total: float
    budget: float
    feasible: bool
    slack: float


def rt_feasible(d_total: float, cfg: WindowConfig) -> FeasibilityReport:
    """Check the real-time constraint d < T*r against a window config."""
    budget = cfg.budget_ms
    return FeasibilityReport(
        d_total=d_total,
        budget=budget,
        feasible=d_total < budget,
        slack=budget - d_total,
    )


def min_step_ratio(model: LatencyModel, T_ms: float) -> float:
    """Minimum feasible step ratio r* = d_compute / (T - c).

    T_ms is the receptive field duration in milliseconds. Requires the
    transfer coefficient to be smaller than the receptive field, otherwise
    no ratio satisfies d(r) < T*r.
    """
    if model.c >= T_ms:
        raise ValueError(
            f"no feasible ratio: transfer coefficient {model.c} ms >= T {T_ms} ms"
        )
    return model.d_compute / (T_ms - model.c)


def snap_to_latent_grid(r_star: float, latent_frames: int) -> Fraction:
    """Smallest latent-aligned ratio k/T_z >= r_star, with k >= 1."""
    if not 0 <= r_star <= 1:
        raise ValueError(f"no grid point for r* = {r_star}")
    k = max(1, math.ceil(r_star * latent_frames - 1e-12))
    return Fraction(k, latent_frames)


def predict_cycle(model: LatencyModel, r, topology: str = "local") -> float:
    """Predicted full-cycle duration for step ratio r.

    local: d_compute + c*r. remote: transfer runs per direction at c*r,
    clamped below by the network round-trip floor.
    """
    r = float(r)
    if topology == "local":
        return model.d_compute + model.c * r
    if topology == "remote":
        per_direction = max(model.c * r, model.network_floor)
        return model.d_compute + 2 * per_direction
    raise ValueError(f"unknown topology {topology!r}")


@dataclass
class SweepRow:
    model: str
    r: Fraction
    budget_ms: float
    transfer_ms: float
    compute_ms: float
    total_ms: float
    feasible: bool

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "r": f"{self.r.numerator}/{self.r.denominator}",
            "budget_ms": self.budget_ms,
            "transfer_ms": self.transfer_ms,
            "compute_ms": self.compute_ms,
            "total_ms": self.total_ms,
            "rt": self.feasible,
        }


def sweep(
    models: dict[str, LatencyModel],
    ratios: list[Fraction],
    T_seconds: float = 6.0,
    topology: str = "local",
) -> list[SweepRow]:
    """Feasibility table across models and step ratios."""
    rows = []
    for name, model in models.items():
        for r in ratios:
            total = predict_cycle(model, r, topology)
            budget = float(T_seconds * r * 1000.0)
            rows.append(
                SweepRow(
                    model=name,
                    r=Fraction(r),
                    budget_ms=budget,
                    transfer_ms=total - model.d_compute,
                    compute_ms=model.d_compute,
                    total_ms=total,
                    feasible=total < budget,
                )
            )
    return rows


def format_sweep(rows: list[SweepRow]) -> str:
    header = f"{'model':<10}{'r':>8}{'T*r ms':>10}{'xfer ms':>10}{'comp ms':>10}{'total ms':>10}  RT"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row.model:<10}{str(row.r):>8}{row.budget_ms:>10.0f}"
            f"{row.transfer_ms:>10.1f}{row.compute_ms:>10.1f}{row.total_ms:>10.1f}"
            f"  {'yes' if row.feasible else 'no'}"
        )
    return "\n".join(lines)


class StageClock:
    """Accumulates named stage durations with a monotonic clock."""

    def __init__(self):
        self._durations: dict[str, float] = {}
        self._start: float | None = None
        self._stage: str | None = None

    def start(self, stage: str) -> None:
        now = time.perf_counter()
        if self._stage is not None:
            self._durations[self._stage] = (
                self._durations.get(self._stage, 0.0) + (now - self._start) * 1000.0
            )
        self._stage = stage
        self._start = now

    def stop(self) -> None:
        self.start("_idle")
        self._stage = None

    def ms(self, stage: str) -> float:
        return self._durations.get(stage, 0.0)
