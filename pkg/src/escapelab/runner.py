"""Execute validated experiment configs and write their output files."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import stats
from .config import ExperimentConfig
from .engine import RngStream
from .escape import (
    DegenerateEnsembleError,
    InsufficientDataError,
    ReturnThresholds,
    detect_nonmonotonicity,
    mean_escape_time,
    met_sweep,
    return_series_escape_times,
    run_escape_ensemble,
    write_ensemble_csv,
    write_sweep_csv,
)
from .market import empirical_escape_dataset, load_price_table, return_table, write_escape_times
from .simulate import simulate_returns

logger = logging.getLogger(__name__)


@dataclass
class RunReport:
    out_dir: Path
    fingerprint: str
    seed: int
    wall_time: float = 0.0
    outputs: list[Path] = field(default_factory=list)
    censored_fractions: dict[str, float] = field(default_factory=dict)

    def write(self) -> Path:
        path = self.out_dir / "report.txt"
        self.outputs.append(path)
        lines = [
            f"# fingerprint: {self.fingerprint}",
            f"seed = {self.seed}",
            f"wall_time_s = {self.wall_time:.3f}",
        ]
        lines += [f"censored_fraction[{k}] = {float(v)!r}" for k, v in self.censored_fractions.items()]
        lines += [f"output = {p.name}" for p in self.outputs]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


def versioned_dir(root, name: str, fp: str) -> Path:
    """Fresh directory ``<name>_<fp12>_v<N>``; existing runs are never reused."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    n = 1
    while True:
        path = root / f"{name}_{fp[:12]}_v{n}"
        try:
            path.mkdir()
            return path
        except FileExistsError:
            n += 1


def _fmt(v: float) -> str:
    return f"{v:g}"


def panel_label(panel: dict) -> str:
    return "_".join(f"{k}={_fmt(v)}" for k, v in panel.items()) or "all"


def run_experiment(cfg: ExperimentConfig, out_root) -> RunReport:
    fp = cfg.fingerprint
    report = RunReport(versioned_dir(out_root, cfg.name, fp), fp, cfg.sim.seed)
    t0 = time.perf_counter()
    runner = {
        "escape": _run_escape,
        "sweep": _run_sweep,
        "return-stats": _run_return_stats,
        "return-escape": _run_return_escape,
    }[cfg.kind]
    runner(cfg, report)
    report.wall_time = time.perf_counter() - t0
    report.write()
    return report


def _run_escape(cfg: ExperimentConfig, report: RunReport) -> None:
    ens = run_escape_ensemble(cfg.model, cfg.escape, cfg.sim.n_events, cfg.sim)
    est = mean_escape_time(ens)
    d = report.out_dir
    report.outputs.append(write_ensemble_csv(d / "events.csv", ens, report.fingerprint))
    report.outputs.append(stats.write_summary(d / "summary.txt", {
        "met": est.met, "std_error": est.std_error, "n_events": est.n_events,
        "censored": ens.censored_count, "ensemble_fingerprint": ens.fingerprint,
    }, report.fingerprint))
    report.censored_fractions["events"] = ens.censored_fraction


def _run_sweep(cfg: ExperimentConfig, report: RunReport) -> None:
    sw = cfg.sweep
    summary: dict[str, object] = {"axis": sw.axis}
    any_ok = False
    for k, panel in enumerate(sw.panel_list()):
        model_fields = {key: v for key, v in panel.items() if key != "x_start"}
        model = replace(cfg.model, **model_fields) if model_fields else cfg.model
        spec = replace(cfg.escape, x_start=panel["x_start"]) if "x_start" in panel else cfg.escape
        # each panel gets its own block of seeds so no two points share a stream
        sim = replace(cfg.sim, seed=cfg.sim.seed + k * len(sw.values))
        points = met_sweep(sw.axis, sw.values, model, spec, sim)
        label = panel_label(panel)
        path = write_sweep_csv(report.out_dir / f"sweep_{label}.csv", sw.axis, points, report.fingerprint,
                               panel=label, base_seed=sim.seed)
        report.outputs.append(path)
        for p in points:
            if p.ok:
                any_ok = True
                report.censored_fractions[f"{label}:{sw.axis}={_fmt(p.value)}"] = p.censored_count / p.n_requested
        try:
            shape = detect_nonmonotonicity(points, sw.k_sigma)
        except InsufficientDataError as exc:
            shape = f"undetermined ({exc})"
        summary[f"shape[{label}]"] = shape
    report.outputs.append(stats.write_summary(report.out_dir / "summary.txt", summary, report.fingerprint))
    if not any_ok:
        raise DegenerateEnsembleError("every sweep point failed; see the sweep files for reasons")


def _simulate(cfg: ExperimentConfig):
    esc = cfg.escape
    kw = {}
    if esc is not None:
        kw = {"x_start": esc.x_start, "x_abs": esc.x_abs, "v_start": esc.v_start}
    return simulate_returns(cfg.model, cfg.returns.n_obs, RngStream(cfg.sim.seed, 0),
                            dt=cfg.sim.dt, obs_steps=cfg.returns.obs_steps, **kw)


def _escape_times(cfg: ExperimentConfig, returns: np.ndarray) -> tuple[np.ndarray, float]:
    sigma = float(np.std(returns, ddof=1))
    if not sigma > 0:
        raise DegenerateEnsembleError("return series has zero variance")
    rc = cfg.returns
    times = return_series_escape_times(returns, ReturnThresholds.from_sigma(sigma, rc.k_i, rc.k_f))
    if times.size < 2:
        raise DegenerateEnsembleError(f"only {times.size} escape events in {returns.size} returns")
    return times, sigma


def _compare_reference(cfg: ExperimentConfig, report: RunReport, times: np.ndarray, summary: dict) -> None:
    rc = cfg.returns
    if rc.reference_prices is None:
        return
    table = return_table(load_price_table(rc.reference_prices))
    ref = empirical_escape_dataset(table, rc.k_i, rc.k_f)
    d = report.out_dir
    report.outputs.append(write_escape_times(d / "reference_escape_times.txt", ref, report.fingerprint))
    if ref.size < 2:
        summary["reference_events"] = int(ref.size)
        return
    gof = stats.compare(times, ref, "logarithmic", rc.n_bins)
    summary.update({
        "reference_events": int(ref.size),
        "chi2": gof.chi2, "chi2_reduced": gof.chi2_reduced, "ks_d": gof.ks_d, "ks_p": gof.ks_p,
    })


def _escape_outputs(cfg, report, times, summary) -> None:
    d = report.out_dir
    report.outputs.append(write_escape_times(d / "escape_times.txt", times, report.fingerprint))
    pf = stats.empirical_pf(times, "logarithmic", cfg.returns.n_bins)
    report.outputs.append(stats.write_pf_csv(d / "pf_escape_times.csv", pf, report.fingerprint,
                                             units="observation steps"))
    summary["escape_events"] = int(times.size)
    est = mean_escape_time(times)
    summary["mean_escape_steps"] = est.met
    summary["mean_escape_steps_se"] = est.std_error


def _run_return_stats(cfg: ExperimentConfig, report: RunReport) -> None:
    rc = cfg.returns
    series = _simulate(cfg)
    r = series.returns
    d, fp = report.out_dir, report.fingerprint
    m = stats.moments(r)
    times, sigma = _escape_times(cfg, r)
    summary: dict[str, object] = {
        "n_obs": int(r.size), "obs_interval": series.obs_interval, "restarts": series.restarts,
        "mean": m.mean, "sigma": m.std, "skewness": m.skewness, "excess_kurtosis": m.kurtosis,
        "delta_x_i": rc.k_i * sigma, "delta_x_f": rc.k_f * sigma,
    }
    report.outputs.append(stats.write_pf_csv(d / "pf_returns.csv", stats.empirical_pf(r, "linear", rc.n_bins), fp,
                                             units="return per observation"))
    vol = np.sqrt(np.maximum(series.variance, 0.0))
    report.outputs.append(stats.write_pf_csv(d / "pf_volatility.csv", stats.empirical_pf(vol, "linear", rc.n_bins),
                                             fp, units="sqrt(v) at observations"))
    report.outputs.append(stats.write_acf_csv(d / "acf_returns.csv", stats.autocorrelation(r, rc.max_lag), fp,
                                              band=3.0 / math.sqrt(r.size)))
    logabs, dropped = stats.log_abs_return_series(r)
    report.outputs.append(stats.write_acf_csv(d / "acf_log_abs_returns.csv",
                                              stats.autocorrelation(logabs, rc.max_lag), fp, dropped_zeros=dropped))
    _escape_outputs(cfg, report, times, summary)
    _compare_reference(cfg, report, times, summary)
    report.outputs.append(stats.write_summary(d / "summary.txt", summary, fp))


def _run_return_escape(cfg: ExperimentConfig, report: RunReport) -> None:
    series = _simulate(cfg)
    times, sigma = _escape_times(cfg, series.returns)
    summary: dict[str, object] = {"n_obs": int(series.returns.size), "sigma": sigma}
    _escape_outputs(cfg, report, times, summary)
    if cfg.model.kind == "gbm":
        fit = stats.geometric_fit(times)
        summary.update({"p_inside": fit.p_inside, "geometric_chi2": fit.chi2, "geometric_dof": fit.dof,
                        "geometric_p_value": fit.p_value, "log_slope": fit.slope, "log_slope_se": fit.slope_se})
    _compare_reference(cfg, report, times, summary)
    report.outputs.append(stats.write_summary(report.out_dir / "summary.txt", summary, report.fingerprint))
