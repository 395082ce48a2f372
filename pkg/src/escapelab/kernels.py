"""Compiled inner loops.

Every kernel consumes normals from a numpy ``Generator`` in the same order as
the pure-Python steppers in :mod:`escapelab.models` (two draws per continuous
step, one per GARCH step) and evaluates the same expressions, so compiled and
interpreted paths agree bit for bit.
"""

import numpy as np
from numba import njit

GBM = 0
HESTON = 1
NLH = 2

# theta layout shared by all continuous-model kernels
MU, SIGMA, A, B, C, RHO = range(6)


@njit(inline="always")
def _advance(model, x, v, theta, dt, sq, rho_c, g):
    z1 = g.standard_normal()
    z2 = g.standard_normal()
    dw1 = sq * z1
    if model == GBM:
        sigma = theta[SIGMA]
        return x + (theta[MU] - 0.5 * sigma * sigma) * dt + sigma * dw1, v
    dw2 = sq * z2
    if model == HESTON:
        drift = theta[MU] - 0.5 * v
    else:
        drift = -((6.0 * x * x + 6.0 * x) + 0.5 * v)
    sv = np.sqrt(v)
    xn = x + drift * dt + sv * dw1
    rho = theta[RHO]
    dwc = rho * dw1 + rho_c * dw2
    vn = v + theta[A] * (theta[B] - v) * dt + theta[C] * sv * dwc
    if vn < 0.0:
        vn = 0.0
    return xn, vn


@njit(nogil=True, cache=True)
def state_path(g, model, theta, x0, v0, dt, n_steps):
    xs = np.empty(n_steps + 1)
    vs = np.empty(n_steps + 1)
    xs[0] = x0
    vs[0] = v0
    sq = np.sqrt(dt)
    rho_c = np.sqrt(1.0 - theta[RHO] * theta[RHO])
    x = x0
    v = v0
    for i in range(n_steps):
        x, v = _advance(model, x, v, theta, dt, sq, rho_c, g)
        xs[i + 1] = x
        vs[i + 1] = v
    return xs, vs


@njit(nogil=True, cache=True)
def escape_chain(g, model, theta, n_events, x_start, v_start, x_abs, dt, max_steps,
                 carry, max_censored):
    """Run ``n_events`` successive escapes on one stream.

    Returns step counts (-1 marks a censored event), the variance at each
    event's start and end, and the number of events completed.  The chain
    stops early once more than ``max_censored`` events were censored.
    """
    steps = np.full(n_events, -1, dtype=np.int64)
    v_begin = np.empty(n_events)
    v_end = np.empty(n_events)
    sq = np.sqrt(dt)
    rho_c = np.sqrt(1.0 - theta[RHO] * theta[RHO])
    v = v_start
    censored = 0
    done = 0
    for e in range(n_events):
        if not carry:
            v = v_start
        x = x_start
        v_begin[e] = v
        s = 0
        while s < max_steps:
            x, v = _advance(model, x, v, theta, dt, sq, rho_c, g)
            s += 1
            if x <= x_abs:
                steps[e] = s
                break
        v_end[e] = v
        done += 1
        if steps[e] < 0:
            censored += 1
            if censored > max_censored:
                break
    return steps, v_begin, v_end, done


@njit(nogil=True, cache=True)
def return_path(g, model, theta, x_start, v_start, x_abs, dt, obs_steps, n_obs):
    """Log-return series sampled every ``obs_steps`` steps.

    When the trajectory reaches ``x_abs`` it restarts at ``x_start`` keeping its
    variance; the reset jump is not part of any return.
    """
    returns = np.empty(n_obs)
    v_obs = np.empty(n_obs)
    sq = np.sqrt(dt)
    rho_c = np.sqrt(1.0 - theta[RHO] * theta[RHO])
    x = x_start
    v = v_start
    restarts = 0
    for i in range(n_obs):
        r = 0.0
        for _ in range(obs_steps):
            xn, v = _advance(model, x, v, theta, dt, sq, rho_c, g)
            r += xn - x
            x = xn
            if x <= x_abs:
                x = x_start
                restarts += 1
        returns[i] = r
        v_obs[i] = v
    return returns, v_obs, restarts


@njit(nogil=True, cache=True)
def garch_path(g, alpha0, alpha, beta, x2_lags, s2_lags, n):
    """GARCH(p, q) returns and conditional variances; lag arrays are most-recent-first."""
    q = alpha.shape[0]
    p = beta.shape[0]
    x2l = x2_lags.copy()
    s2l = s2_lags.copy()
    xs = np.empty(n)
    s2s = np.empty(n)
    for t in range(n):
        s2 = alpha0
        for i in range(q):
            s2 += alpha[i] * x2l[i]
        for j in range(p):
            s2 += beta[j] * s2l[j]
        x = g.standard_normal() * np.sqrt(s2)
        for i in range(q - 1, 0, -1):
            x2l[i] = x2l[i - 1]
        if q > 0:
            x2l[0] = x * x
        for j in range(p - 1, 0, -1):
            s2l[j] = s2l[j - 1]
        if p > 0:
            s2l[0] = s2
        xs[t] = x
        s2s[t] = s2
    return xs, s2s


@njit(nogil=True, cache=True)
def threshold_escapes(returns, arm_level, absorb_level):
    """Step counts between arming (r <= arm_level) and absorption (r <= absorb_level)."""
    out = np.empty(returns.shape[0], dtype=np.int64)
    k = 0
    armed = False
    n = 0
    for i in range(returns.shape[0]):
        r = returns[i]
        if armed:
            n += 1
            if r <= absorb_level:
                out[k] = n
                k += 1
                armed = False
        elif r <= arm_level:
            armed = True
            n = 0
    return out[:k]
