"""First-passage measurement.

Ensembles of trajectories are run to an absorbing barrier.  In the restart
protocol each new event starts again at ``x_start`` but inherits the variance
the previous trajectory had when it hit the barrier.  Mean escape times come
with standard errors so that parameter sweeps can be tested for nonmonotonic
(noise-enhanced-stability) shapes.
"""

from __future__ import annotations

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .canonical import fingerprint
from .engine import ParameterError, RngStream, SimConfig
from .models import (
    GarchParams,
    HestonParams,
    ModelParams,
    NlhParams,
    long_run_variance,
    model_to_dict,
)
from .simulate import model_code

logger = logging.getLogger(__name__)

SWEEP_AXES = ("a", "b", "c", "rho", "x_start")


class DegenerateEnsembleError(RuntimeError):
    """No usable escape events: everything was censored, or too much was."""


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class EscapeSpec:
    """Start, barrier and restart policy of an escape experiment.

    ``v_start`` of ``None`` starts at the model's long-run variance (``b`` for
    the Heston-type models).
    """

    x_start: float
    x_abs: float = -6.0
    v_start: float | None = None
    carry_volatility: bool = True

    def __post_init__(self):
        if not self.x_abs < self.x_start:
            raise ParameterError(f"x_abs ({self.x_abs}) must lie below x_start ({self.x_start})")
        if self.v_start is not None and not self.v_start >= 0:
            raise ParameterError(f"v_start must be >= 0, got {self.v_start}")

    def initial_variance(self, model: ModelParams) -> float:
        return long_run_variance(model) if self.v_start is None else float(self.v_start)


@dataclass(frozen=True)
class ReturnThresholds:
    """Arming level ``delta_x_i`` and absorbing level ``delta_x_f`` for a return series."""

    delta_x_i: float
    delta_x_f: float

    def __post_init__(self):
        if not self.delta_x_f < self.delta_x_i:
            raise ParameterError(
                f"absorbing threshold ({self.delta_x_f}) must lie below the start threshold ({self.delta_x_i})"
            )

    @classmethod
    def from_sigma(cls, sigma: float, k_i: float = -0.1, k_f: float = -2.0) -> "ReturnThresholds":
        return cls(k_i * sigma, k_f * sigma)


@dataclass
class EscapeEnsemble:
    """Escape times of one ensemble, in time units, in event order.

    ``steps`` keeps every requested event (-1 for censored ones); ``times``
    holds only the uncensored events.
    """

    times: np.ndarray
    censored_count: int
    n_requested: int
    dt: float
    fingerprint: str
    steps: np.ndarray = field(repr=False)
    v_begin: np.ndarray = field(repr=False)
    v_end: np.ndarray = field(repr=False)

    @property
    def censored_fraction(self) -> float:
        return self.censored_count / self.n_requested


@dataclass(frozen=True)
class MetEstimate:
    met: float
    std_error: float
    n_events: int


def ensemble_fingerprint(model: ModelParams, spec: EscapeSpec, n_events: int, sim: SimConfig) -> str:
    payload = {
        "model": model_to_dict(model),
        "spec": asdict(spec),
        "n_events": n_events,
        "dt": sim.dt,
        "seed": sim.seed,
        "horizon": sim.horizon,
    }
    if spec.carry_volatility:
        payload["chains"] = min(sim.workers, n_events)
    return fingerprint(payload)


def run_escape_ensemble(model: ModelParams, spec: EscapeSpec, n_events: int, sim: SimConfig) -> EscapeEnsemble:
    """Simulate ``n_events`` barrier crossings.

    Without volatility carry-over, event ``i`` owns stream ``(seed, i)`` and the
    result does not depend on ``sim.workers``.  With carry-over the events form
    ``sim.workers`` sequential chains (contiguous blocks of event indices), chain
    ``w`` owning stream ``(seed, w)``.

    Raises :class:`DegenerateEnsembleError` if every event is censored or the
    censored fraction exceeds ``sim.max_censored_fraction``.
    """
    if isinstance(model, GarchParams):
        raise ParameterError("GARCH is a discrete return process; use return_series_escape_times")
    if n_events < 1:
        raise ParameterError(f"n_events must be >= 1, got {n_events}")
    code, theta = model_code(model)
    v0 = spec.initial_variance(model)
    max_steps = sim.max_steps
    if sim.max_censored_fraction is None:
        budget = n_events
    else:
        budget = int(math.floor(sim.max_censored_fraction * n_events))
    args = (code, theta)

    if spec.carry_volatility:
        blocks = np.array_split(np.arange(n_events), min(sim.workers, n_events))

        def run_chain(w):
            g = RngStream(sim.seed, w).generator
            return kernels.escape_chain(g, *args, len(blocks[w]), spec.x_start, v0, spec.x_abs,
                                        sim.dt, max_steps, True, budget)

        with ThreadPoolExecutor(max_workers=sim.workers) as pool:
            parts = list(pool.map(run_chain, range(len(blocks))))
        aborted = any(done < len(b) for (_, _, _, done), b in zip(parts, blocks))
        steps = np.concatenate([p[0] for p in parts])
        v_begin = np.concatenate([p[1] for p in parts])
        v_end = np.concatenate([p[2] for p in parts])
    else:
        steps = np.full(n_events, -1, dtype=np.int64)
        v_begin = np.empty(n_events)
        v_end = np.empty(n_events)
        lock = threading.Lock()
        state = {"censored": 0, "abort": False}

        def run_block(idx):
            for i in idx:
                if state["abort"]:
                    return
                g = RngStream(sim.seed, int(i)).generator
                s, vb, ve, _ = kernels.escape_chain(g, *args, 1, spec.x_start, v0, spec.x_abs,
                                                    sim.dt, max_steps, False, 1)
                steps[i], v_begin[i], v_end[i] = s[0], vb[0], ve[0]
                if s[0] < 0:
                    with lock:
                        state["censored"] += 1
                        if state["censored"] > budget:
                            state["abort"] = True

        chunks = np.array_split(np.arange(n_events), max(1, min(n_events, 16 * sim.workers)))
        with ThreadPoolExecutor(max_workers=sim.workers) as pool:
            list(pool.map(run_block, chunks))
        aborted = state["abort"]

    censored = int(np.count_nonzero(steps < 0))
    if aborted or censored > budget:
        raise DegenerateEnsembleError(
            f"censored fraction exceeded {sim.max_censored_fraction} "
            f"(horizon {sim.horizon:g} time units)"
        )
    if censored == n_events:
        raise DegenerateEnsembleError(
            f"all {n_events} events censored at horizon {sim.horizon:g} time units"
        )
    if censored:
        logger.info("%d of %d events censored", censored, n_events)
    ok = steps >= 0
    return EscapeEnsemble(
        times=steps[ok] * sim.dt,
        censored_count=censored,
        n_requested=n_events,
        dt=sim.dt,
        fingerprint=ensemble_fingerprint(model, spec, n_events, sim),
        steps=steps,
        v_begin=v_begin,
        v_end=v_end,
    )


def mean_escape_time(ens: EscapeEnsemble | Sequence[float]) -> MetEstimate:
    """Sample mean of the escape times with its standard error."""
    times = np.asarray(ens.times if isinstance(ens, EscapeEnsemble) else ens, dtype=float)
    n = times.size
    if n < 2:
        raise InsufficientDataError(f"need at least 2 escape events, got {n}")
    return MetEstimate(float(times.mean()), float(times.std(ddof=1) / math.sqrt(n)), n)


def return_series_escape_times(returns, th: ReturnThresholds) -> np.ndarray:
    """Escape times, in observation steps, of a return series.

    The clock arms at an observation ``<= delta_x_i`` and counts steps until an
    observation ``<= delta_x_f``; it then re-arms at the next qualifying
    observation after the absorbing one.  An interval still open when the
    series ends is discarded.
    """
    r = np.ascontiguousarray(returns, dtype=float)
    return kernels.threshold_escapes(r, float(th.delta_x_i), float(th.delta_x_f))


# -- sweeps ---------------------------------------------------------------


@dataclass
class SweepPoint:
    value: float
    estimate: MetEstimate | None
    censored_count: int
    n_requested: int
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.estimate is not None


def with_axis(model: ModelParams, spec: EscapeSpec, axis: str, value: float):
    if axis not in SWEEP_AXES:
        raise ParameterError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if axis == "x_start":
        return model, replace(spec, x_start=float(value))
    if not isinstance(model, (HestonParams, NlhParams)):
        raise ParameterError(f"axis {axis!r} needs a Heston-type model")
    return replace(model, **{axis: float(value)}), spec


def met_sweep(axis: str, values: Iterable[float], model: ModelParams, spec: EscapeSpec,
              sim: SimConfig) -> list[SweepPoint]:
    """MET at each value of one parameter.

    Point ``j`` runs with seed ``sim.seed + j``, so points are independent and a
    one-point sweep equals a direct :func:`run_escape_ensemble` call.  A point
    that fails is reported with its error rather than dropped.
    """
    values = [float(v) for v in values]
    if not values:
        raise ParameterError("sweep needs at least one value")
    points = []
    for j, value in enumerate(values):
        m, s = with_axis(model, spec, axis, value)
        sim_j = replace(sim, seed=sim.seed + j)
        try:
            ens = run_escape_ensemble(m, s, sim.n_events, sim_j)
            points.append(SweepPoint(value, mean_escape_time(ens), ens.censored_count, sim.n_events))
        except (DegenerateEnsembleError, InsufficientDataError) as exc:
            logger.warning("sweep point %s=%g failed: %s", axis, value, exc)
            points.append(SweepPoint(value, None, -1, sim.n_events, str(exc)))
    return points


MONOTONE_DECREASING = "monotone-decreasing"
SINGLE_MAXIMUM = "single-maximum"
MIN_THEN_MAX = "min-then-max"
INCONCLUSIVE = "noisy-inconclusive"


def _as_pairs(curve) -> list[tuple[float, MetEstimate]]:
    pairs = []
    for item in curve:
        if isinstance(item, SweepPoint):
            if item.ok:
                pairs.append((item.value, item.estimate))
        else:
            value, est = item
            if est is not None:
                pairs.append((float(value), est))
    return sorted(pairs, key=lambda p: p[0])


def significant_moves(curve, k: float = 3.0) -> list[str]:
    """Sequence of significant ``"up"``/``"down"`` legs along the curve.

    A new leg starts only when the curve moves away from the running extreme
    of the current leg by at least ``k`` combined standard errors, so every
    turning point differs from its neighbouring turning points (or the curve
    ends) by that margin.
    """
    pts = _as_pairs(curve)
    m = np.array([e.met for _, e in pts])
    se = np.array([e.std_error for _, e in pts])

    def above(i, j):
        return m[i] - m[j] >= k * math.hypot(se[i], se[j])

    legs: list[str] = []
    lo = hi = ext = 0
    for i in range(1, len(pts)):
        if not legs:
            if above(i, lo):
                legs.append("up")
                ext = i
            elif above(hi, i):
                legs.append("down")
                ext = i
            else:
                lo = i if m[i] < m[lo] else lo
                hi = i if m[i] > m[hi] else hi
        elif legs[-1] == "up":
            if m[i] >= m[ext]:
                ext = i
            elif above(ext, i):
                legs.append("down")
                ext = i
        else:
            if m[i] <= m[ext]:
                ext = i
            elif above(i, ext):
                legs.append("up")
                ext = i
    return legs


def detect_nonmonotonicity(curve, k: float = 3.0) -> str:
    """Classify a MET curve as monotone-decreasing, single-maximum,
    min-then-max or noisy-inconclusive using ``k``-sigma significance."""
    if len(_as_pairs(curve)) < 5:
        raise InsufficientDataError("nonmonotonicity detection needs at least 5 valid points")
    legs = significant_moves(curve, k)
    shape = {
        ("down",): MONOTONE_DECREASING,
        ("up", "down"): SINGLE_MAXIMUM,
        ("down", "up", "down"): MIN_THEN_MAX,
    }
    return shape.get(tuple(legs), INCONCLUSIVE)


# -- output ---------------------------------------------------------------


def _header(fp: str, **meta) -> str:
    lines = [f"# fingerprint: {fp}"]
    lines += [f"# {k}: {v}" for k, v in meta.items()]
    return "\n".join(lines) + "\n"


def write_ensemble_csv(path: Path, ens: EscapeEnsemble, fp: str | None = None) -> Path:
    """One row per requested event; censored rows carry an empty escape time."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(_header(fp or ens.fingerprint, axis="event", units=f"time (dt={ens.dt!r})",
                         censored=ens.censored_count))
        fh.write("event,escape_time,censored,v_start,v_escape\n")
        for i, s in enumerate(ens.steps):
            t = "" if s < 0 else repr(float(s * ens.dt))
            fh.write(f"{i},{t},{int(s < 0)},{float(ens.v_begin[i])!r},{float(ens.v_end[i])!r}\n")
    return path


def write_sweep_csv(path: Path, axis: str, points: Sequence[SweepPoint], fp: str, **meta) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(_header(fp, axis=axis, units="met in model time units", **meta))
        fh.write(f"{axis},met,std_error,n_events,censored,status\n")
        for p in points:
            if p.ok:
                e = p.estimate
                fh.write(f"{float(p.value)!r},{float(e.met)!r},{float(e.std_error)!r},{e.n_events},{p.censored_count},ok\n")
            else:
                reason = (p.error or "failed").replace(",", ";").replace("\n", " ")
                fh.write(f"{float(p.value)!r},,,0,,{reason}\n")
    return path
