import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from escapelab.engine import ParameterError, SimConfig
from escapelab.escape import (
    INCONCLUSIVE,
    MIN_THEN_MAX,
    MONOTONE_DECREASING,
    SINGLE_MAXIMUM,
    DegenerateEnsembleError,
    EscapeSpec,
    InsufficientDataError,
    MetEstimate,
    ReturnThresholds,
    SweepPoint,
    detect_nonmonotonicity,
    ensemble_fingerprint,
    mean_escape_time,
    met_sweep,
    return_series_escape_times,
    run_escape_ensemble,
    write_ensemble_csv,
    write_sweep_csv,
)
from escapelab.models import GarchParams, GbmParams, NlhParams

DRIFT_DOWN = GbmParams(mu=-1.0, sigma=0.0)  # dx = -dt


def _sim(**kw):
    base = dict(dt=0.01, seed=1, n_events=100, workers=1)
    base.update(kw)
    return SimConfig(**base)


# -- ensembles ---------------------------------------------------------------


def test_pure_drift_crossing_time():
    ens = run_escape_ensemble(DRIFT_DOWN, EscapeSpec(0.0, -6.0, carry_volatility=False), 20, _sim())
    assert np.all(np.abs(ens.times - 6.0) <= 0.01 + 1e-12)
    assert ens.censored_count == 0


@pytest.mark.parametrize("dt", [0.02, 0.01, 0.005, 0.0025])
def test_pure_drift_error_bounded_by_dt(dt):
    # first grid point past the barrier: error within one step of 19/3
    ens = run_escape_ensemble(DRIFT_DOWN, EscapeSpec(0.0, -19 / 3, carry_volatility=False), 5, _sim(dt=dt))
    err = np.abs(ens.times - 19 / 3)
    assert np.all(err <= dt + 1e-9)


def test_event_accounting_with_censoring():
    model = NlhParams(a=1.0, b=0.05, c=0.2)
    n = 200
    ens = run_escape_ensemble(model, EscapeSpec(-1.1), n, _sim(max_time=3.0, n_events=n))
    assert ens.censored_count > 0
    assert ens.times.size + ens.censored_count == n
    assert np.all(ens.times > 0)
    assert np.count_nonzero(ens.steps < 0) == ens.censored_count


def test_generous_horizon_has_no_censoring():
    ens = run_escape_ensemble(NlhParams(a=1.0, b=0.5, c=0.2), EscapeSpec(-1.4), 1000, _sim(n_events=1000))
    assert ens.times.size + ens.censored_count == 1000
    assert ens.censored_count == 0


def test_all_censored_is_degenerate():
    # no noise: the walker slides into the well and never leaves
    model = NlhParams(a=0.0, b=0.0, c=0.0)
    with pytest.raises(DegenerateEnsembleError, match="censored"):
        run_escape_ensemble(model, EscapeSpec(-0.75, v_start=0.0), 3, _sim(max_time=1.0))


@pytest.mark.parametrize("carry", [True, False])
def test_censored_budget_aborts(carry):
    model = NlhParams(a=1.0, b=0.05, c=0.2)
    sim = _sim(max_time=1.0, max_censored_fraction=0.01, n_events=100)
    with pytest.raises(DegenerateEnsembleError, match="exceeded"):
        run_escape_ensemble(model, EscapeSpec(-0.75, carry_volatility=carry), 100, sim)


def test_garch_has_no_trajectory():
    with pytest.raises(ParameterError):
        run_escape_ensemble(GarchParams(1e-5), EscapeSpec(0.0), 10, _sim())


def test_escape_spec_validation():
    with pytest.raises(ParameterError):
        EscapeSpec(x_start=-6.0, x_abs=-6.0)
    with pytest.raises(ParameterError):
        EscapeSpec(x_start=0.0, v_start=-0.1)


def test_results_independent_of_workers_without_carry():
    model = NlhParams(a=2.0, b=0.3, c=1.0, rho=-0.3)
    spec = EscapeSpec(-0.75, carry_volatility=False)
    a = run_escape_ensemble(model, spec, 300, _sim(workers=1))
    b = run_escape_ensemble(model, spec, 300, _sim(workers=8))
    assert np.array_equal(a.steps, b.steps)
    assert np.array_equal(a.v_end, b.v_end)
    assert a.fingerprint == b.fingerprint


def test_carry_chains_pass_variance_along():
    model = NlhParams(a=2.0, b=0.3, c=1.0)
    spec = EscapeSpec(-0.75, v_start=0.05)
    for workers in (1, 3):
        ens = run_escape_ensemble(model, spec, 90, _sim(workers=workers))
        starts = [0] + [len(b) for b in np.array_split(np.arange(90), workers)]
        firsts = np.cumsum(starts)[:-1]
        assert np.all(ens.v_begin[firsts] == 0.05)
        follow = np.setdiff1d(np.arange(90), firsts)
        assert np.array_equal(ens.v_begin[follow], ens.v_end[follow - 1])


def test_reset_mode_restarts_variance():
    ens = run_escape_ensemble(NlhParams(a=2.0, b=0.3, c=1.0), EscapeSpec(-0.75, v_start=0.05,
                              carry_volatility=False), 50, _sim())
    assert np.all(ens.v_begin == 0.05)


def test_fingerprint_tracks_chains_only_in_carry_mode():
    model = NlhParams()
    carry, reset = EscapeSpec(-1.1), EscapeSpec(-1.1, carry_volatility=False)
    assert ensemble_fingerprint(model, carry, 10, _sim(workers=1)) != ensemble_fingerprint(model, carry, 10, _sim(workers=2))
    assert ensemble_fingerprint(model, reset, 10, _sim(workers=1)) == ensemble_fingerprint(model, reset, 10, _sim(workers=2))
    assert ensemble_fingerprint(model, reset, 10, _sim(seed=1)) != ensemble_fingerprint(model, reset, 10, _sim(seed=2))


# -- mean escape time -----------------------------------------------------------


def test_mean_escape_time_examples():
    assert mean_escape_time([2.0, 4.0]) == MetEstimate(3.0, 1.0, 2)
    est = mean_escape_time([6.0] * 10)
    assert (est.met, est.std_error) == (6.0, 0.0)


def test_mean_escape_time_needs_two_events():
    with pytest.raises(InsufficientDataError):
        mean_escape_time([1.0])


def test_geometric_mean_oracle(rng):
    times = rng.geometric(0.1, 100_000).astype(float)
    est = mean_escape_time(times)
    assert abs(est.met - 10.0) < 3 * est.std_error
    assert est.std_error == pytest.approx(times.std(ddof=1) / math.sqrt(times.size))


# -- return-series escapes --------------------------------------------------------

TH = ReturnThresholds.from_sigma(1.0, -0.1, -2.0)


def test_return_escape_hand_traces():
    assert list(return_series_escape_times([-0.1, -0.5, -2.1], TH)) == [2]
    assert list(return_series_escape_times([-0.2, -2.5, -0.2, -2.5], TH)) == [1, 1]
    assert list(return_series_escape_times([0.5, 0.0, -0.05], TH)) == []
    assert list(return_series_escape_times([-0.5, -0.3], TH)) == []


def test_thresholds_must_be_ordered():
    with pytest.raises(ParameterError):
        ReturnThresholds(-2.0, -0.1)


def _scan_oracle(r, arm, absorb):
    r = np.asarray(r)
    out, pos = [], 0
    while True:
        arms = np.flatnonzero(r[pos:] <= arm)
        if arms.size == 0:
            return out
        j = pos + arms[0]
        hits = np.flatnonzero(r[j + 1:] <= absorb)
        if hits.size == 0:
            return out
        k = j + 1 + hits[0]
        out.append(k - j)
        pos = k + 1


@given(st.lists(st.floats(-4, 4), max_size=200))
def test_return_escapes_match_scan_oracle(r):
    assert list(return_series_escape_times(np.array(r, dtype=float), TH)) == _scan_oracle(r, -0.1, -2.0)


@given(st.lists(st.floats(-4, 4), min_size=1, max_size=200))
def test_return_escapes_bounded_by_absorptions(r):
    r = np.array(r)
    times = return_series_escape_times(r, TH)
    assert np.all(times >= 1)
    assert times.size <= np.count_nonzero(r <= -2.0)
    assert times.sum() <= r.size - 1 if times.size else True


# -- sweeps -------------------------------------------------------------------------


def test_single_value_sweep_equals_direct_run():
    model = NlhParams(a=2.0, b=0.3, c=1.0)
    spec = EscapeSpec(-0.75)
    sim = _sim(n_events=200, seed=5)
    (point,) = met_sweep("b", [0.5], model, spec, sim)
    direct = mean_escape_time(run_escape_ensemble(NlhParams(a=2.0, b=0.5, c=1.0), spec, 200, sim))
    assert point.estimate == direct


def test_sweep_reports_failed_points():
    model = NlhParams(a=0.0, b=0.0, c=0.0)
    spec = EscapeSpec(-0.75, v_start=0.0)
    points = met_sweep("x_start", [-0.75, -1.5], model, spec, _sim(n_events=5, max_time=5.0))
    assert len(points) == 2
    assert not points[0].ok and "censored" in points[0].error
    assert points[1].ok


def test_sweep_rejects_unknown_axis():
    with pytest.raises(ParameterError):
        met_sweep("sigma", [0.1], NlhParams(), EscapeSpec(-1.1), _sim())
    with pytest.raises(ParameterError):
        met_sweep("a", [0.1], GbmParams(), EscapeSpec(-1.1), _sim())


def _curve(values, se=1e-3):
    return [(float(i), MetEstimate(float(v), se, 100)) for i, v in enumerate(values)]


def test_nonmonotonicity_examples():
    assert detect_nonmonotonicity(_curve([10, 8, 6, 4, 2])) == MONOTONE_DECREASING
    assert detect_nonmonotonicity(_curve([2, 4, 9, 4, 2])) == SINGLE_MAXIMUM
    assert detect_nonmonotonicity(_curve([9, 4, 2, 5, 9, 4, 1])) == MIN_THEN_MAX


def test_nonmonotonicity_respects_error_bars():
    # the bump at index 2 is within 3 combined errors of its neighbours
    assert detect_nonmonotonicity(_curve([10, 8, 8.2, 4, 2], se=0.1)) == MONOTONE_DECREASING
    assert detect_nonmonotonicity(_curve([5, 5.1, 4.9, 5.05, 5], se=1.0)) == INCONCLUSIVE


def test_nonmonotonicity_needs_five_points():
    with pytest.raises(InsufficientDataError):
        detect_nonmonotonicity(_curve([1, 2, 3, 4]))


def test_nonmonotonicity_skips_failed_points():
    pts = [SweepPoint(float(i), MetEstimate(v, 1e-3, 10), 0, 10) for i, v in enumerate([2, 4, 9, 4, 2])]
    pts.insert(2, SweepPoint(2.5, None, -1, 10, "censored"))
    assert detect_nonmonotonicity(pts) == SINGLE_MAXIMUM


@given(st.lists(st.floats(0.1, 100), min_size=5, max_size=30))
def test_sorted_curves_are_monotone(values):
    values = sorted(set(values), reverse=True)
    if len(values) < 5 or min(np.diff(values[::-1])) < 0.01:
        return
    assert detect_nonmonotonicity(_curve(values, se=1e-4)) == MONOTONE_DECREASING


# -- files ---------------------------------------------------------------------------


def _read(path: Path):
    lines = path.read_text().splitlines()
    return [l for l in lines if l.startswith("#")], [l for l in lines if not l.startswith("#")]


def test_ensemble_csv(tmp_path):
    model = NlhParams(a=1.0, b=0.05, c=0.2)
    ens = run_escape_ensemble(model, EscapeSpec(-1.1), 50, _sim(max_time=3.0, n_events=50))
    path = write_ensemble_csv(tmp_path / "e.csv", ens)
    meta, rows = _read(path)
    assert meta[0] == f"# fingerprint: {ens.fingerprint}"
    assert any(m.startswith("# units:") for m in meta)
    assert rows[0] == "event,escape_time,censored,v_start,v_escape"
    body = [r.split(",") for r in rows[1:]]
    assert len(body) == 50
    assert sum(int(r[2]) for r in body) == ens.censored_count
    times = [float(r[1]) for r in body if r[1]]
    np.testing.assert_array_equal(times, ens.times)


def test_sweep_csv(tmp_path):
    pts = [SweepPoint(0.1, MetEstimate(3.0, 0.1, 10), 0, 10), SweepPoint(0.2, None, -1, 10, "all, censored")]
    meta, rows = _read(write_sweep_csv(tmp_path / "s.csv", "b", pts, "abc"))
    assert meta[0] == "# fingerprint: abc"
    assert "# axis: b" in meta
    assert rows[0] == "b,met,std_error,n_events,censored,status"
    assert rows[1] == "0.1,3.0,0.1,10,0,ok"
    assert rows[2].startswith("0.2,,,0,,") and rows[2].count(",") == 5
