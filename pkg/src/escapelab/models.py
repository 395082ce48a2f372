"""Market models as steppable processes, plus the cubic potential.

Four models share :class:`ProcessState`: geometric Brownian motion, GARCH(p, q)
in discrete time, Heston, and the nonlinear Heston model whose log-price moves
in the effective potential ``U(x) = 2x^3 + 3x^2``.  Stepping is pure: a state
goes in, a new state comes out, and the stream is advanced.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Union

from .engine import (
    ParameterError,
    RngStream,
    check_rho,
    cir_step,
    correlate,
    draw_wiener_pair,
)


def _finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value}")


@dataclass(frozen=True)
class GbmParams:
    mu: float = 0.0
    sigma: float = 0.02
    kind = "gbm"

    def __post_init__(self):
        _finite("mu", self.mu)
        _finite("sigma", self.sigma)
        if self.sigma < 0:
            raise ParameterError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class GarchParams:
    """GARCH(p, q): ``alpha`` holds the q ARCH weights, ``beta`` the p GARCH weights."""

    alpha0: float
    alpha: tuple[float, ...] = (0.1,)
    beta: tuple[float, ...] = (0.85,)
    kind = "garch"

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if not self.alpha0 > 0:
            raise ParameterError(f"alpha0 must be > 0, got {self.alpha0}")
        if not self.alpha:
            raise ParameterError("alpha needs at least one coefficient")
        if any(a < 0 for a in self.alpha) or any(b < 0 for b in self.beta):
            raise ParameterError("alpha and beta coefficients must be >= 0")

    @property
    def persistence(self) -> float:
        return sum(self.alpha) + sum(self.beta)

    @property
    def stationary(self) -> bool:
        return self.persistence < 1.0


@dataclass(frozen=True)
class HestonParams:
    mu: float = 0.0
    a: float = 1.0
    b: float = 0.01
    c: float = 0.1
    rho: float = 0.0
    kind = "heston"

    def __post_init__(self):
        _check_cir(self.a, self.b, self.c, self.rho)
        _finite("mu", self.mu)


@dataclass(frozen=True)
class CubicPotential:
    """``U(x) = 2x^3 + 3x^2`` with its landmarks.

    The metastable minimum sits at ``x_me = 0``, the barrier top at
    ``x_m = -1`` and the zero crossing at ``x_c = -1.5``; the barrier height is 1.
    """

    x_me: float = field(default=0.0, init=False)
    x_m: float = field(default=-1.0, init=False)
    x_c: float = field(default=-1.5, init=False)

    def value(self, x):
        return potential_value(x)

    def gradient(self, x):
        return potential_gradient(x)

    @property
    def delta_u(self) -> float:
        return potential_value(self.x_m) - potential_value(self.x_me)


POTENTIAL = CubicPotential()


@dataclass(frozen=True)
class NlhParams:
    a: float = 2.0
    b: float = 0.01
    c: float = 0.75
    rho: float = 0.0
    potential: CubicPotential = POTENTIAL
    kind = "nlh"

    def __post_init__(self):
        _check_cir(self.a, self.b, self.c, self.rho)


def _check_cir(a: float, b: float, c: float, rho: float) -> None:
    for name, val in (("a", a), ("b", b), ("c", c)):
        _finite(name, val)
        if val < 0:
            raise ParameterError(f"{name} must be >= 0, got {val}")
    check_rho(rho)


ModelParams = Union[GbmParams, GarchParams, HestonParams, NlhParams]

_MODEL_TYPES = {cls.kind: cls for cls in (GbmParams, GarchParams, HestonParams, NlhParams)}


def model_to_dict(model: ModelParams) -> dict:
    d = {"kind": model.kind}
    for k, v in asdict(model).items():
        if k == "potential":
            continue
        d[k] = list(v) if isinstance(v, tuple) else v
    return d


def model_from_dict(d: dict) -> ModelParams:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _MODEL_TYPES:
        raise ParameterError(f"model.kind must be one of {sorted(_MODEL_TYPES)}, got {kind!r}")
    cls = _MODEL_TYPES[kind]
    allowed = {f for f in cls.__dataclass_fields__ if f != "potential"}
    unknown = set(d) - allowed
    if unknown:
        raise ParameterError(f"unknown {kind} parameter(s): {sorted(unknown)}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ParameterError(f"invalid {kind} parameters: {exc}") from None


@dataclass(frozen=True)
class ProcessState:
    """Common model state.

    For GARCH, ``x`` is the latest return, ``v`` the latest conditional
    variance, and ``aux`` holds ``(past x^2, past sigma^2)`` lags, most recent
    first.
    """

    x: float = 0.0
    v: float = 0.0
    t: float = 0.0
    aux: tuple = ()

    def __post_init__(self):
        if self.v < 0:
            raise ParameterError(f"variance must be >= 0, got {self.v}")


# -- potential -------------------------------------------------------------


def potential_value(x):
    return 2.0 * x * x * x + 3.0 * x * x


def potential_gradient(x):
    return 6.0 * x * x + 6.0 * x


def barrier_heights(x_o: float, pot: CubicPotential = POTENTIAL) -> tuple[float, float]:
    """Return ``(delta_u, delta_u_in)``.

    ``delta_u`` is the depth of the metastable well; ``delta_u_in`` the barrier
    left to climb for a particle starting at ``x_o``.
    """
    u_max = pot.value(pot.x_m)
    return u_max - pot.value(pot.x_me), u_max - pot.value(x_o)


# -- stepping --------------------------------------------------------------


def gbm_step(state: ProcessState, p: GbmParams, stream: RngStream, dt: float) -> ProcessState:
    w = draw_wiener_pair(stream, dt)
    x = state.x + (p.mu - 0.5 * p.sigma * p.sigma) * dt + p.sigma * w.dW1
    return replace(state, x=x, v=p.sigma * p.sigma, t=state.t + dt)


def _sv_step(state, drift, a, b, c, rho, stream, dt):
    w = draw_wiener_pair(stream, dt)
    v = state.v
    x = state.x + drift * dt + math.sqrt(v) * w.dW1
    v_new = cir_step(v, a, b, c, correlate(w, rho), dt)
    return ProcessState(x=x, v=v_new, t=state.t + dt, aux=state.aux)


def heston_step(state: ProcessState, p: HestonParams, stream: RngStream, dt: float) -> ProcessState:
    return _sv_step(state, p.mu - 0.5 * state.v, p.a, p.b, p.c, p.rho, stream, dt)


def nlh_step(state: ProcessState, p: NlhParams, stream: RngStream, dt: float) -> ProcessState:
    drift = -(potential_gradient(state.x) + 0.5 * state.v)
    return _sv_step(state, drift, p.a, p.b, p.c, p.rho, stream, dt)


def garch_initial_state(p: GarchParams) -> ProcessState:
    """State with every lag at the unconditional variance."""
    s2 = garch_unconditional_variance(p, _general=True)
    return ProcessState(x=0.0, v=s2, t=0.0, aux=((s2,) * len(p.alpha), (s2,) * len(p.beta)))


def garch_step(state: ProcessState, p: GarchParams, stream: RngStream) -> ProcessState:
    """One observation of GARCH(p, q); one step is one observation interval."""
    x2_lags, s2_lags = state.aux
    if len(x2_lags) != len(p.alpha) or len(s2_lags) != len(p.beta):
        raise ParameterError("lag buffer does not match the GARCH order")
    s2 = p.alpha0
    for a, x2 in zip(p.alpha, x2_lags):
        s2 += a * x2
    for b, prev in zip(p.beta, s2_lags):
        s2 += b * prev
    x = stream.standard_normal() * math.sqrt(s2)
    aux = (((x * x,) + x2_lags)[: len(p.alpha)], ((s2,) + s2_lags)[: len(p.beta)])
    return ProcessState(x=x, v=s2, t=state.t + 1.0, aux=aux)


def step(state: ProcessState, model: ModelParams, stream: RngStream, dt: float) -> ProcessState:
    if isinstance(model, GbmParams):
        return gbm_step(state, model, stream, dt)
    if isinstance(model, HestonParams):
        return heston_step(state, model, stream, dt)
    if isinstance(model, NlhParams):
        return nlh_step(state, model, stream, dt)
    return garch_step(state, model, stream)


# -- analytic results --------------------------------------------------------


def gbm_escape_pf_analytic(p_inside: float, n: int) -> float:
    """Probability that independent returns first leave the region at step n."""
    if not 0.0 < p_inside < 1.0:
        raise ParameterError(f"p_inside must lie in (0, 1), got {p_inside}")
    if int(n) != n or n < 1:
        raise ParameterError(f"n must be an integer >= 1, got {n}")
    return (1.0 - p_inside) * p_inside ** (int(n) - 1)


def _require_stationary(p: GarchParams) -> None:
    if not p.stationary:
        raise ParameterError(
            f"GARCH moments need sum(alpha) + sum(beta) < 1, got {p.persistence:.6g}"
        )


def garch_unconditional_variance(p: GarchParams, _general: bool = False) -> float:
    """``alpha0 / (1 - sum(alpha) - sum(beta))``."""
    if not _general:
        _require_garch11(p)
    _require_stationary(p)
    return p.alpha0 / (1.0 - p.persistence)


def garch_correlation_time(p: GarchParams, _general: bool = False) -> float:
    """Decay time of the x^2 autocorrelation, ``|ln(alpha1 + beta1)|^-1``."""
    if not _general:
        _require_garch11(p)
    _require_stationary(p)
    if p.persistence <= 0:
        return 0.0
    return 1.0 / abs(math.log(p.persistence))


def _require_garch11(p: GarchParams) -> None:
    if len(p.alpha) != 1 or len(p.beta) != 1:
        raise ParameterError("closed-form moments are only available for GARCH(1,1)")


def garch_fit_from_moments(target_variance: float, target_tau: float, alpha1: float) -> GarchParams:
    """Invert the GARCH(1,1) variance and correlation-time formulas.

    Two targets cannot pin three parameters, so ``alpha1`` is an input.
    """
    if not target_variance > 0 or not target_tau > 0:
        raise ParameterError("target_variance and target_tau must be > 0")
    persistence = math.exp(-1.0 / target_tau)
    beta1 = persistence - alpha1
    if alpha1 <= 0 or beta1 < 0 or persistence >= 1.0:
        raise ParameterError(
            f"infeasible alpha1={alpha1}: need 0 < alpha1 <= exp(-1/tau) = {persistence:.6g}"
        )
    return GarchParams(alpha0=target_variance * (1.0 - persistence), alpha=(alpha1,), beta=(beta1,))


def long_run_variance(model: ModelParams) -> float:
    if isinstance(model, GbmParams):
        return model.sigma**2
    if isinstance(model, GarchParams):
        return garch_unconditional_variance(model, _general=True)
    return model.b
