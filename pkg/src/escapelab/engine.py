"""Random-number and integration substrate shared by every model.

Each :class:`RngStream` wraps a counter-based Philox generator keyed by
``(seed, stream_id)``.  Independent escape events (or worker chains) each own
one stream, so results never depend on how work is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ParameterError(ValueError):
    """A model or configuration parameter lies outside its domain."""


class RngStream:
    """Reproducible normal-increment source for one event lane.

    Two streams built from the same ``(seed, stream_id)`` produce identical
    sequences; distinct ``stream_id`` values are statistically independent
    (Philox keys derived through :class:`numpy.random.SeedSequence`).
    """

    __slots__ = ("seed", "stream_id", "generator")

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise ParameterError("seed and stream_id must be non-negative integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def standard_normal(self) -> float:
        return float(self.generator.standard_normal())


@dataclass(frozen=True)
class WienerPair:
    dW1: float
    dW2: float


@dataclass(frozen=True)
class StepConfig:
    """Explicit time-stepping contract: step size and censoring horizon."""

    dt: float = 0.01
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if self.max_steps < 1:
            raise ParameterError(f"max_steps must be >= 1, got {self.max_steps}")


@dataclass(frozen=True)
class SimConfig:
    """Simulation controls common to all experiments.

    ``max_time`` of ``None`` means ``10**7 * dt``.  ``workers`` is the number of
    threads; in carry-volatility mode it is also the number of independent
    event chains and therefore part of the result.
    """

    dt: float = 0.01
    seed: int = 0
    n_events: int = 10_000
    workers: int = 1
    max_time: float | None = None
    max_censored_fraction: float | None = None

    def __post_init__(self):
        StepConfig(self.dt)
        if self.seed < 0:
            raise ParameterError(f"seed must be >= 0, got {self.seed}")
        if self.n_events < 1:
            raise ParameterError(f"n_events must be >= 1, got {self.n_events}")
        if self.workers < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers}")
        if self.max_time is not None and not self.max_time > 0:
            raise ParameterError(f"max_time must be > 0, got {self.max_time}")
        f = self.max_censored_fraction
        if f is not None and not 0.0 <= f < 1.0:
            raise ParameterError(f"max_censored_fraction must lie in [0, 1), got {f}")

    @property
    def horizon(self) -> float:
        return 1e7 * self.dt if self.max_time is None else self.max_time

    @property
    def max_steps(self) -> int:
        return max(1, int(math.ceil(self.horizon / self.dt - 1e-9)))


def draw_wiener_pair(stream: RngStream, dt: float) -> WienerPair:
    """Two independent N(0, dt) increments; advances the stream by two draws."""
    sq = math.sqrt(dt)
    z1 = stream.standard_normal()
    z2 = stream.standard_normal()
    return WienerPair(sq * z1, sq * z2)


def draw_wiener_increments(stream: RngStream, dt: float, n: int) -> np.ndarray:
    """Vectorised form of ``n`` successive :func:`draw_wiener_pair` calls, shape (n, 2)."""
    return math.sqrt(dt) * stream.generator.standard_normal(2 * n).reshape(n, 2)


def check_rho(rho: float) -> None:
    if not -1.0 <= rho <= 1.0:
        raise ParameterError(f"rho must lie in [-1, 1], got {rho}")


def correlate(pair: WienerPair, rho: float) -> float:
    """Noise entering the variance equation, correlated with dW1 at level rho."""
    check_rho(rho)
    return rho * pair.dW1 + math.sqrt(1.0 - rho * rho) * pair.dW2


def cir_step(v: float, a: float, b: float, c: float, dWc: float, dt: float) -> float:
    """One full-truncation Euler step of dv = a(b - v)dt + c sqrt(v) dW."""
    if a < 0 or b < 0 or c < 0:
        raise ParameterError(f"CIR parameters must be non-negative, got a={a}, b={b}, c={c}")
    vp = v if v > 0.0 else 0.0
    vn = v + a * (b - v) * dt + c * math.sqrt(vp) * dWc
    return vn if vn > 0.0 else 0.0
