"""Ready-made experiment configs, one per standard experiment.

Every preset is a raw config mapping (see :mod:`escapelab.config`).  Sweep
grids are logarithmic; ``v_start: null`` starts each trajectory at the
reverting level ``b``.
"""

from __future__ import annotations

import copy

import numpy as np

from .config import ConfigError

STARTS = [-0.75, -1.1, -1.4, -1.6]


def log_grid(lo_exp: float, hi_exp: float, step: float) -> list[float]:
    n = int(round((hi_exp - lo_exp) / step))
    return [float(10.0 ** e) for e in np.round(np.linspace(lo_exp, hi_exp, n + 1), 10)]


# Below b ~ 0.25 a walker started at -1.1 that falls back into the well stays
# trapped far longer than any feasible horizon; the grid skips that stretch.
REVERT_ONLY_B = [1e-3, float(10.0 ** -2.5), 1e-2] + log_grid(-0.6, 1.0, 0.2)

_SIM = {"dt": 0.01, "seed": 0, "n_events": 10_000, "workers": 1,
        "max_time": None, "max_censored_fraction": None}


def _sweep(name, model, axis, values, panels, sim=None):
    return {
        "name": name,
        "kind": "sweep",
        "model": {"kind": "nlh", "rho": 0.0, **model},
        "escape": {"x_start": STARTS[1], "x_abs": -6.0, "v_start": None, "carry_volatility": True},
        "sim": {**_SIM, **(sim or {})},
        "sweep": {"axis": axis, "values": values, "panels": panels, "k_sigma": 3.0},
    }


# Trajectories that start inside the well at small noise do not escape within
# any practical time; cap the horizon and abort points dominated by censoring.
_CAPPED = {"max_time": 2000.0, "max_censored_fraction": 0.01}

PRESETS: dict[str, dict] = {
    "fig2": {
        "name": "fig2",
        "kind": "return-escape",
        "model": {"kind": "gbm", "mu": 0.0, "sigma": 0.02},
        "sim": {**_SIM, "dt": 1.0},
        "returns": {"n_obs": 1_000_000, "obs_steps": 1, "k_i": -0.1, "k_f": -2.0,
                    "n_bins": 60, "max_lag": 100, "reference_prices": None},
    },
    "fig2-garch": {
        "name": "fig2-garch",
        "kind": "return-escape",
        "model": {"kind": "garch", "alpha0": None, "alpha": None, "beta": None},
        "sim": {**_SIM, "dt": 1.0},
        "returns": {"n_obs": 1_000_000, "obs_steps": 1, "k_i": -0.1, "k_f": -2.0,
                    "n_bins": 60, "max_lag": 100, "reference_prices": None},
    },
    "fig2-heston": {
        "name": "fig2-heston",
        "kind": "return-escape",
        "model": {"kind": "heston", "mu": 0.0, "a": None, "b": None, "c": None, "rho": None},
        "sim": {**_SIM},
        "returns": {"n_obs": 1_000_000, "obs_steps": 1, "k_i": -0.1, "k_f": -2.0,
                    "n_bins": 60, "max_lag": 100, "reference_prices": None},
    },
    "fig3": _sweep("fig3", {"a": 1e-2, "b": 1e-2, "c": 0.0}, "b", REVERT_ONLY_B,
                   {"x_start": [-1.1, -1.4, -1.6]}),
    "fig4a": _sweep("fig4a", {"a": 1e-1, "b": 1e-2, "c": 1e-2}, "b", log_grid(-3.0, 1.0, 0.25),
                    {"a": [1e-7, 1e-6, 1e-4, 1e-1], "x_start": STARTS}, _CAPPED),
    "fig4b": _sweep("fig4b", {"a": 1e-1, "b": 1e-2, "c": 10.0}, "b", log_grid(-3.0, 1.0, 0.25),
                    {"a": [1e-1, 1.0, 10.0, 100.0], "x_start": STARTS}, _CAPPED),
    "fig5": _sweep("fig5", {"a": 1e-3, "b": 1e-2, "c": 1e-2}, "c", log_grid(-2.0, 2.0, 0.25),
                   {"a": [1e-3, 2.7e-2, 7.3e-1, 6.6], "x_start": STARTS}, _CAPPED),
    "fig6-9": {
        "name": "fig6-9",
        "kind": "return-stats",
        "model": {"kind": "nlh", "a": 2.0, "b": 0.01, "c": 0.75, "rho": 0.0},
        "escape": {"x_start": -0.75, "x_abs": -6.0, "v_start": 8.62e-5, "carry_volatility": True},
        "sim": {**_SIM},
        "returns": {"n_obs": 1_000_000, "obs_steps": 3, "k_i": -0.1, "k_f": -1.5,
                    "n_bins": 60, "max_lag": 100, "reference_prices": None},
    },
}


def preset(name: str) -> dict:
    """A fresh copy of the named preset's raw config."""
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown name {name!r}; available: {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])
