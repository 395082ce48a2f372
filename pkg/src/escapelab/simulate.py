"""Path and return-series generation for every model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .engine import ParameterError, RngStream
from .models import (
    GarchParams,
    GbmParams,
    HestonParams,
    ModelParams,
    NlhParams,
    garch_correlation_time,
    garch_unconditional_variance,
    long_run_variance,
)


def model_code(model: ModelParams) -> tuple[int, np.ndarray]:
    """Kernel selector and packed ``[mu, sigma, a, b, c, rho]`` for a continuous model."""
    if isinstance(model, GbmParams):
        return kernels.GBM, np.array([model.mu, model.sigma, 0.0, 0.0, 0.0, 0.0])
    if isinstance(model, HestonParams):
        return kernels.HESTON, np.array([model.mu, 0.0, model.a, model.b, model.c, model.rho])
    if isinstance(model, NlhParams):
        return kernels.NLH, np.array([0.0, 0.0, model.a, model.b, model.c, model.rho])
    raise ParameterError(f"{type(model).__name__} is not a continuous-time model")


def state_path(model, x0, v0, dt, n_steps, stream: RngStream):
    """Full ``(x, v)`` trajectory of ``n_steps`` Euler steps, initial point included."""
    code, theta = model_code(model)
    return kernels.state_path(stream.generator, code, theta, float(x0), float(v0), float(dt), int(n_steps))


def simulate_cir(v0: float, a: float, b: float, c: float, dt: float, n_steps: int,
                 stream: RngStream) -> np.ndarray:
    """CIR variance path (uncorrelated with any price)."""
    _, vs = state_path(HestonParams(a=a, b=b, c=c, rho=0.0), 0.0, v0, dt, n_steps, stream)
    return vs


@dataclass
class ReturnSeries:
    """Returns sampled at a fixed observation interval.

    ``variance`` is the model variance at each observation; ``restarts`` counts
    absorptions (and restarts) of the nonlinear model during the run.
    """

    returns: np.ndarray
    variance: np.ndarray
    obs_interval: float
    restarts: int = 0


def garch_burn_in(p: GarchParams) -> int:
    """Warm-up length discarded before statistics: ten correlation times."""
    return int(math.ceil(10.0 * garch_correlation_time(p, _general=True)))


def simulate_garch(p: GarchParams, n_obs: int, stream: RngStream, burn_in: int | None = None):
    """GARCH returns and conditional variances after discarding the warm-up."""
    s2 = garch_unconditional_variance(p, _general=True)
    burn = garch_burn_in(p) if burn_in is None else int(burn_in)
    x, s2s = kernels.garch_path(
        stream.generator, p.alpha0, np.array(p.alpha), np.array(p.beta),
        np.full(len(p.alpha), s2), np.full(len(p.beta), s2), burn + int(n_obs),
    )
    return x[burn:], s2s[burn:]


def simulate_returns(model: ModelParams, n_obs: int, stream: RngStream, *, dt: float = 0.01,
                     obs_steps: int = 1, x_start: float = 0.0, v_start: float | None = None,
                     x_abs: float | None = None) -> ReturnSeries:
    """Return series of ``n_obs`` observations.

    Continuous models are integrated with step ``dt`` and observed every
    ``obs_steps`` steps.  GARCH is discrete: one step is one observation.
    For the nonlinear model ``x_abs`` (default -6) is the absorbing barrier
    where the walker restarts at ``x_start`` with its current variance.
    """
    if n_obs < 1 or obs_steps < 1:
        raise ParameterError("n_obs and obs_steps must be >= 1")
    if isinstance(model, GarchParams):
        x, s2 = simulate_garch(model, n_obs, stream)
        return ReturnSeries(x, s2, 1.0, 0)
    code, theta = model_code(model)
    v0 = long_run_variance(model) if v_start is None else float(v_start)
    if isinstance(model, NlhParams):
        barrier = -6.0 if x_abs is None else float(x_abs)
    else:
        barrier = -math.inf if x_abs is None else float(x_abs)
    r, v, restarts = kernels.return_path(
        stream.generator, code, theta, float(x_start), v0, barrier, float(dt), int(obs_steps), int(n_obs)
    )
    return ReturnSeries(r, v, dt * obs_steps, int(restarts))
