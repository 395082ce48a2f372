"""Experiment configuration: YAML schema, validation, overrides and fingerprints.

A config is a mapping with these sections (unknown keys are rejected)::

    name: my-sweep                # label used in output directory names
    kind: sweep                   # escape | sweep | return-stats | return-escape
    model: {kind: nlh, a: 0.01, b: 0.01, c: 0.0, rho: 0.0}
    escape: {x_start: -1.1, x_abs: -6.0, v_start: null, carry_volatility: true}
    sim: {dt: 0.01, seed: 0, n_events: 10000, workers: 1,
          max_time: null, max_censored_fraction: null}
    sweep:                        # kind: sweep only
      axis: b
      values: [0.001, 0.01, 0.1]
      panels: {x_start: [-1.1, -1.4]}   # cartesian product of overrides
      k_sigma: 3.0
    returns:                      # kind: return-stats / return-escape only
      n_obs: 1000000
      obs_steps: 3
      k_i: -0.1
      k_f: -1.5
      n_bins: 60
      max_lag: 100
      reference_prices: null      # optional price CSV to compare against

``v_start: null`` starts every trajectory at the model's long-run variance.
The canonical form fills every default; its hash is the config fingerprint.
``workers`` only enters the fingerprint when it changes results, i.e. for
escape experiments with volatility carry-over.
"""

from __future__ import annotations

import copy
import itertools
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import yaml

from .canonical import fingerprint
from .engine import ParameterError, SimConfig
from .escape import SWEEP_AXES, EscapeSpec
from .models import GarchParams, ModelParams, model_from_dict, model_to_dict

KINDS = ("escape", "sweep", "return-stats", "return-escape")
_SECTIONS = ("name", "kind", "model", "escape", "sim", "sweep", "returns")
_PANEL_KEYS = ("a", "b", "c", "rho", "x_start")


class ConfigError(ParameterError):
    """Invalid experiment config; the message names the field."""


@dataclass(frozen=True)
class SweepConfig:
    axis: str
    values: tuple[float, ...]
    panels: tuple[tuple[str, tuple[float, ...]], ...] = ()
    k_sigma: float = 3.0

    def panel_list(self) -> list[dict[str, float]]:
        """Every combination of panel overrides, in row-major order."""
        if not self.panels:
            return [{}]
        keys = [k for k, _ in self.panels]
        return [dict(zip(keys, combo)) for combo in itertools.product(*(v for _, v in self.panels))]


@dataclass(frozen=True)
class ReturnsConfig:
    n_obs: int = 1_000_000
    obs_steps: int = 1
    k_i: float = -0.1
    k_f: float = -2.0
    n_bins: int = 60
    max_lag: int = 100
    reference_prices: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    kind: str
    model: ModelParams
    sim: SimConfig
    escape: EscapeSpec | None = None
    sweep: SweepConfig | None = None
    returns: ReturnsConfig | None = None

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind, "model": model_to_dict(self.model), "sim": asdict(self.sim)}
        if self.escape is not None:
            d["escape"] = asdict(self.escape)
        if self.sweep is not None:
            d["sweep"] = {
                "axis": self.sweep.axis,
                "values": list(self.sweep.values),
                "panels": {k: list(v) for k, v in self.sweep.panels},
                "k_sigma": self.sweep.k_sigma,
            }
        if self.returns is not None:
            d["returns"] = asdict(self.returns)
        return d

    @property
    def carries_volatility(self) -> bool:
        return self.kind in ("escape", "sweep") and self.escape is not None and self.escape.carry_volatility

    def fingerprint_payload(self) -> dict:
        d = self.to_dict()
        if not self.carries_volatility:
            del d["sim"]["workers"]
        return d

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.fingerprint_payload())


# -- parsing --------------------------------------------------------------


def _section(d: dict, name: str, required: bool) -> dict | None:
    val = d.get(name)
    if val is None:
        if required:
            raise ConfigError(f"{name}: section is required")
        return None
    if not isinstance(val, dict):
        raise ConfigError(f"{name}: must be a mapping")
    return dict(val)


def _check_keys(section: str, d: dict, allowed) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{section}: unknown field(s) {unknown}; allowed: {sorted(allowed)}")


def _num(section: str, key: str, value, integer: bool = False):
    if isinstance(value, str):
        # YAML 1.1 reads exponent forms without a dot (1e-5) as text
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
    if integer:
        if float(value) != int(value):
            raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(f"{section}.{key}: must be finite, got {value!r}")
    return float(value)


def _build(section: str, cls, d: dict, ints=(), floats=(), optional=(), flags=(), texts=()):
    _check_keys(section, d, cls.__dataclass_fields__)
    kw = {}
    for k, v in d.items():
        if v is None and k in optional:
            kw[k] = None
        elif k in ints:
            kw[k] = _num(section, k, v, integer=True)
        elif k in floats:
            kw[k] = _num(section, k, v)
        elif k in flags:
            if not isinstance(v, bool):
                raise ConfigError(f"{section}.{k}: expected true or false, got {v!r}")
            kw[k] = v
        elif k in texts:
            kw[k] = str(v)
        else:
            raise ConfigError(f"{section}.{k}: invalid value {v!r}")
    try:
        return cls(**kw)
    except ParameterError as exc:
        raise ConfigError(f"{section}: {exc}") from None


def _model(d: dict) -> ModelParams:
    missing = sorted(k for k, v in d.items() if v is None)
    if missing:
        kind = d.get("kind")
        hint = ""
        if kind in ("garch", "heston"):
            hint = " (fitted parameters are not published; supply them with --set model.<field>=<value>)"
        raise ConfigError(f"model.{missing[0]}: required for {kind} model{hint}")
    for k, v in d.items():
        if k == "kind":
            continue
        if k in ("alpha", "beta"):
            if not isinstance(v, (list, tuple)) or not v:
                raise ConfigError(f"model.{k}: expected a non-empty list of numbers")
            d[k] = tuple(_num("model", k, x) for x in v)
        else:
            d[k] = _num("model", k, v)
    try:
        return model_from_dict(d)
    except ParameterError as exc:
        raise ConfigError(f"model: {exc}") from None


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a config mapping; errors name the offending field."""
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    raw = copy.deepcopy(raw)
    _check_keys("config", raw, _SECTIONS)
    name = str(raw.get("name") or "experiment")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind: must be one of {list(KINDS)}, got {kind!r}")
    model = _model(_section(raw, "model", True))

    sim_d = _section(raw, "sim", False) or {}
    sim = _build("sim", SimConfig, sim_d, ints=("seed", "n_events", "workers"),
                 floats=("dt", "max_time", "max_censored_fraction"),
                 optional=("max_time", "max_censored_fraction"))

    esc_d = _section(raw, "escape", kind in ("escape", "sweep"))
    escape = None
    if esc_d is not None:
        escape = _build("escape", EscapeSpec, esc_d, floats=("x_start", "x_abs", "v_start"),
                        optional=("v_start",), flags=("carry_volatility",))
    if kind in ("escape", "sweep") and isinstance(model, GarchParams):
        raise ConfigError("model.kind: garch has no continuous trajectory; use kind return-escape")

    sweep = None
    sw_d = _section(raw, "sweep", kind == "sweep")
    if kind != "sweep" and sw_d is not None:
        raise ConfigError(f"sweep: only valid for kind sweep, not {kind}")
    if sw_d is not None:
        _check_keys("sweep", sw_d, SweepConfig.__dataclass_fields__)
        axis = sw_d.get("axis")
        if axis not in SWEEP_AXES:
            raise ConfigError(f"sweep.axis: must be one of {list(SWEEP_AXES)}, got {axis!r}")
        values = sw_d.get("values")
        if not isinstance(values, (list, tuple)) or not values:
            raise ConfigError("sweep.values: expected a non-empty list of numbers")
        panels_d = sw_d.get("panels") or {}
        if not isinstance(panels_d, dict):
            raise ConfigError("sweep.panels: must be a mapping of field to list of values")
        panels = []
        for k, vs in panels_d.items():
            if k not in _PANEL_KEYS:
                raise ConfigError(f"sweep.panels: unknown field {k!r}; allowed: {list(_PANEL_KEYS)}")
            if k == axis:
                raise ConfigError(f"sweep.panels.{k}: cannot also be the sweep axis")
            if not isinstance(vs, (list, tuple)) or not vs:
                raise ConfigError(f"sweep.panels.{k}: expected a non-empty list of numbers")
            panels.append((k, tuple(_num("sweep.panels", k, v) for v in vs)))
        sweep = SweepConfig(
            axis=axis,
            values=tuple(_num("sweep", "values", v) for v in values),
            panels=tuple(panels),
            k_sigma=_num("sweep", "k_sigma", sw_d.get("k_sigma", 3.0)),
        )
        for panel in sweep.panel_list():
            for value in sweep.values:
                _check_point(model, escape, {**panel, axis: value})

    returns = None
    ret_d = _section(raw, "returns", kind in ("return-stats", "return-escape"))
    if kind in ("escape", "sweep") and ret_d is not None:
        raise ConfigError(f"returns: only valid for return experiments, not {kind}")
    if ret_d is not None:
        returns = _build("returns", ReturnsConfig, ret_d, ints=("n_obs", "obs_steps", "n_bins", "max_lag"),
                         floats=("k_i", "k_f"), optional=("reference_prices",), texts=("reference_prices",))
        if returns.n_obs < 2 or returns.obs_steps < 1 or returns.n_bins < 1 or returns.max_lag < 1:
            raise ConfigError("returns: n_obs >= 2, obs_steps >= 1, n_bins >= 1 and max_lag >= 1 are required")
        if not returns.k_f < returns.k_i < 0:
            raise ConfigError(f"returns.k_i/k_f: need k_f < k_i < 0, got {returns.k_i}, {returns.k_f}")
        if 2 * returns.max_lag >= returns.n_obs:
            raise ConfigError(f"returns.max_lag: must be < n_obs/2, got {returns.max_lag}")
    return ExperimentConfig(name, kind, model, sim, escape, sweep, returns)


def _check_point(model, escape, overrides: dict) -> None:
    m = {k: v for k, v in overrides.items() if k != "x_start"}
    try:
        if m:
            replace(model, **m)
        if "x_start" in overrides:
            replace(escape, x_start=overrides["x_start"])
    except ParameterError as exc:
        raise ConfigError(f"sweep: {exc}") from None
    except TypeError:
        raise ConfigError(f"sweep: fields {sorted(m)} do not apply to model {model.kind}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    return config_from_dict(raw)


def canonical_yaml(cfg: ExperimentConfig) -> str:
    """Fully resolved config text; loading it gives back an equal config."""
    header = f"# fingerprint: {cfg.fingerprint}\n"
    return header + yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=False)


# -- overrides ------------------------------------------------------------


def parse_override(text: str) -> tuple[str, object]:
    """``key=value`` with ``value`` parsed as a YAML scalar or list."""
    if "=" not in text:
        raise ConfigError(f"override {text!r}: expected key=value")
    key, value = text.split("=", 1)
    try:
        return key.strip(), yaml.safe_load(value)
    except yaml.YAMLError:
        raise ConfigError(f"override {text!r}: cannot parse value") from None


def apply_overrides(raw: dict, overrides: dict) -> dict:
    """Apply ``{key: value}`` overrides to a raw config mapping.

    Dotted keys address a field directly (``model.a``).  A bare key first
    replaces a sweep panel list of that name with the single given value,
    then falls back to the first section holding that field
    (``sim``, ``escape``, ``returns``, ``model``, ``sweep``).
    """
    raw = copy.deepcopy(raw)
    for key, value in overrides.items():
        if "." in key:
            *path, leaf = key.split(".")
            node = raw
            for p in path:
                if not isinstance(node.get(p), dict):
                    node[p] = {} if node.get(p) is None else node[p]
                    if not isinstance(node[p], dict):
                        raise ConfigError(f"override {key}: {p} is not a section")
                node = node[p]
            node[leaf] = value
            continue
        panels = (raw.get("sweep") or {}).get("panels") or {}
        if key in panels:
            panels[key] = value if isinstance(value, list) else [value]
            continue
        if key in ("name", "kind"):
            raw[key] = value
            continue
        for section in ("sim", "escape", "returns", "model", "sweep"):
            if isinstance(raw.get(section), dict) and key in raw[section]:
                raw[section][key] = value
                break
        else:
            raise ConfigError(f"override {key}: no such field in this config")
    return raw
