import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from escapelab.stats import (
    AcfResult,
    EmpiricalPF,
    StatsError,
    autocorrelation,
    chi_square,
    compare,
    empirical_pf,
    fit_decay_time,
    geometric_fit,
    kolmogorov_q,
    ks_statistic,
    ks_test,
    log_abs_return_series,
    moments,
    pf_on_edges,
    write_acf_csv,
    write_pf_csv,
    write_summary,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
sample_arrays = arrays(np.float64, st.integers(5, 200), elements=finite)

# -- PFs ------------------------------------------------------------------------------


def test_uniform_pf(rng):
    pf = empirical_pf(rng.uniform(0, 1, 1_000_000), "linear", 10, range=(0, 1))
    np.testing.assert_allclose(pf.densities, 1.0, rtol=0.01)


def test_pf_hand_count():
    pf = empirical_pf([1, 1, 1, 3, 3, 3], "linear", 2, range=(0, 4))
    np.testing.assert_array_equal(pf.densities, [0.25, 0.25])
    np.testing.assert_array_equal(pf.bin_edges, [0, 2, 4])


@given(sample_arrays, st.integers(2, 80))
def test_pf_normalised_linear(x, n_bins):
    assume(np.ptp(x) > 1e-9)
    pf = empirical_pf(x, "linear", n_bins)
    assert abs(np.sum(pf.densities * pf.widths) - 1.0) < 1e-9
    assert np.all(np.diff(pf.bin_edges) > 0)


@given(arrays(np.float64, st.integers(5, 200), elements=st.floats(1e-3, 1e6)), st.integers(2, 80))
def test_pf_normalised_logarithmic(x, n_bins):
    assume(x.max() / x.min() > 1.0001)
    pf = empirical_pf(x, "logarithmic", n_bins)
    assert abs(np.sum(pf.densities * pf.widths) - 1.0) < 1e-9
    assert np.allclose(np.diff(np.log(pf.bin_edges)), np.log(pf.bin_edges[1] / pf.bin_edges[0]))


def test_pf_errors():
    with pytest.raises(StatsError):
        empirical_pf([1.0], "linear", 10)
    with pytest.raises(StatsError):
        empirical_pf([1.0, 2.0], "linear", 1)
    with pytest.raises(StatsError):
        empirical_pf([-1.0, 2.0], "logarithmic", 5)
    with pytest.raises(StatsError):
        empirical_pf([1.0, 2.0], "cubic", 5)
    with pytest.raises(StatsError, match="narrow"):
        empirical_pf([0.0, 2e-311], "linear", 2)


# -- moments -----------------------------------------------------------------------------


def test_moments_three_point():
    m = moments([-1.0, 0.0, 1.0, 0.0])
    assert m.mean == 0.0 and m.skewness == 0.0
    m3 = moments([-1.0, 0.0, 1.0, -1.0, 0.0, 1.0])
    assert m3.std == pytest.approx(math.sqrt(4 / 5))


def test_moments_right_skewed():
    m = moments([0.0, 0.0, 0.0, 10.0])
    # central moments about 2.5: m2 = 18.75, m3 = 93.75, m4 = 820.3125
    assert m.skewness == pytest.approx(93.75 / 18.75**1.5)
    assert m.kurtosis == pytest.approx(820.3125 / 18.75**2 - 3)
    assert m.skewness > 0


def test_moments_match_scipy(rng):
    x = rng.standard_t(5, 10_000)
    m = moments(x)
    assert m.skewness == pytest.approx(scipy.stats.skew(x), rel=1e-10)
    assert m.kurtosis == pytest.approx(scipy.stats.kurtosis(x), rel=1e-10)
    assert m.std == pytest.approx(np.std(x, ddof=1), rel=1e-12)


def test_gaussian_excess_kurtosis_is_zero():
    x = np.random.default_rng(3).standard_normal(10_000_000)
    assert abs(moments(x).kurtosis) < 0.01


def test_moments_errors():
    with pytest.raises(StatsError):
        moments([1.0, 2.0, 3.0])
    with pytest.raises(StatsError):
        moments([2.0] * 10)


@given(sample_arrays, st.floats(-100, 100), st.floats(0.01, 100))
def test_moments_shift_and_scale(x, shift, scale):
    assume(np.std(x) > 1e-3 * max(1.0, np.abs(x).max()))
    a, b = moments(x), moments(scale * x + shift)
    assert b.mean == pytest.approx(scale * a.mean + shift, rel=1e-10, abs=1e-9)
    assert b.std == pytest.approx(scale * a.std, rel=1e-10)
    assert b.skewness == pytest.approx(a.skewness, rel=1e-10, abs=1e-10)
    assert b.kurtosis == pytest.approx(a.kurtosis, rel=1e-10, abs=1e-10)


# -- autocorrelation ------------------------------------------------------------------------


def _direct_acf(x, k):
    d = x - x.mean()
    return np.dot(d[: d.size - k], d[k:]) / np.dot(d, d)


@given(arrays(np.float64, st.integers(10, 120), elements=finite), st.integers(0, 4))
def test_acf_matches_direct_sum(x, k):
    assume(np.std(x) > 1e-6)
    acf = autocorrelation(x, 4)
    assert acf.values[0] == 1.0
    assert acf.values[k] == pytest.approx(_direct_acf(x, k), abs=1e-9)


def test_white_noise_acf(rng):
    x = rng.standard_normal(1_000_000)
    acf = autocorrelation(x, 50)
    assert np.all(np.abs(acf.values[1:]) < 3 / math.sqrt(x.size))


def test_ar1_acf(rng):
    n = 1_000_000
    e = rng.standard_normal(n)
    x = _ar1(e, 0.5)
    acf = autocorrelation(x, 5)
    assert acf.values[1] == pytest.approx(0.5, abs=0.01)
    assert fit_decay_time(acf, 1, 5) == pytest.approx(-1 / math.log(0.5), rel=0.05)


def _ar1(e, phi):
    from scipy.signal import lfilter

    return lfilter([1.0], [1.0, -phi], e)


def test_permuted_series_is_white(rng):
    x = _ar1(rng.standard_normal(200_000), 0.9)
    acf = autocorrelation(rng.permutation(x), 30)
    assert np.all(np.abs(acf.values[1:]) < 3 / math.sqrt(x.size) * 1.5)


def test_acf_errors():
    with pytest.raises(StatsError):
        autocorrelation(np.ones(100), 5)
    with pytest.raises(StatsError):
        autocorrelation(np.arange(10.0), 5)


def test_decay_time_needs_decay():
    with pytest.raises(StatsError):
        fit_decay_time(AcfResult(np.arange(4), np.array([1.0, 0.5, 0.6, 0.7])))
    with pytest.raises(StatsError):
        fit_decay_time(AcfResult(np.arange(4), np.array([1.0, -0.5, -0.6, -0.7])))


# -- log-absolute returns -----------------------------------------------------------------


def test_log_abs_returns():
    v, d = log_abs_return_series([math.e, -math.e])
    np.testing.assert_allclose(v, [1.0, 1.0])
    v, d = log_abs_return_series([1.0, -1.0])
    np.testing.assert_array_equal(v, [0.0, 0.0])
    v, d = log_abs_return_series([0.1, 0.0, -0.1])
    np.testing.assert_allclose(v, [math.log(0.1)] * 2)
    assert d == 1
    with pytest.raises(StatsError):
        log_abs_return_series([0.0, 0.0])
    with pytest.raises(StatsError):
        log_abs_return_series([])


# -- chi-square ------------------------------------------------------------------------------


def _pf(dens, edges=(0.0, 1.0, 2.0)):
    dens = np.asarray(dens, dtype=float)
    return EmpiricalPF(np.asarray(edges), dens, (dens * 100).astype(int), 100, "linear")


def test_chi_square_examples():
    assert chi_square(_pf([0.3, 0.2]), _pf([0.25, 0.25])) == pytest.approx((0.02, 0.02))
    assert chi_square(_pf([0.4, 0.1]), _pf([0.4, 0.1])) == (0.0, 0.0)


def test_chi_square_needs_shared_edges():
    with pytest.raises(StatsError):
        chi_square(_pf([0.5, 0.5]), _pf([0.5, 0.5], edges=(0.0, 1.0, 3.0)))


@given(sample_arrays, st.integers(2, 40))
def test_chi_square_self_is_zero(x, n_bins):
    assume(np.ptp(x) > 1e-9)
    pf = empirical_pf(x, "linear", n_bins)
    assert chi_square(pf, pf) == (0.0, 0.0)


def test_chi_square_independent_samples_small(rng):
    a, b = rng.exponential(10, 100_000) + 1, rng.exponential(10, 100_000) + 1
    gof = compare(a, b, "logarithmic", 30)
    assert gof.chi2_reduced < 30 / 100_000 * 10
    assert gof.ks_p > 0.001


def test_pf_on_edges_reuses_reference_bins():
    ref = empirical_pf([1.0, 2.0, 3.0, 4.0], "linear", 3)
    pf = pf_on_edges([1.5, 3.5, 9.0], ref)
    np.testing.assert_array_equal(pf.bin_edges, ref.bin_edges)
    assert pf.n_samples == 2


# -- K-S -------------------------------------------------------------------------------------


def test_ks_hand_example():
    d, _ = ks_test([1, 2, 3], [1.5, 2.5, 3.5])
    assert d == pytest.approx(1 / 3, abs=1e-15)


def test_ks_identical_samples():
    x = np.arange(10.0)
    assert ks_test(x, x) == (0.0, 1.0)


def test_ks_empty():
    with pytest.raises(StatsError):
        ks_test([], [1.0])


@given(sample_arrays, sample_arrays)
def test_ks_statistic_matches_scipy(a, b):
    assert ks_statistic(a, b) == pytest.approx(scipy.stats.ks_2samp(a, b).statistic, abs=1e-12)


@given(sample_arrays, sample_arrays)
def test_ks_symmetric_and_transform_invariant(a, b):
    assert ks_test(a, b) == ks_test(b, a)
    # arcsinh is strictly increasing
    assert ks_statistic(np.arcsinh(a), np.arcsinh(b)) == pytest.approx(ks_statistic(a, b), abs=1e-15)


@pytest.mark.parametrize("lam", [0.05, 0.3, 0.6, 0.9, 1.1, 1.17, 1.19, 1.5, 2.0, 3.0])
def test_kolmogorov_tail_matches_scipy(lam):
    assert kolmogorov_q(lam) == pytest.approx(scipy.special.kolmogorov(lam), abs=1e-12)


def test_ks_p_value_formula():
    a, b = np.arange(50.0), np.arange(30.0) + 7.5
    d, p = ks_test(a, b)
    ne = 50 * 30 / 80
    lam = d * (math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne))
    assert p == pytest.approx(scipy.special.kolmogorov(lam), abs=1e-12)


def test_ks_p_mostly_above_five_percent():
    rng = np.random.default_rng(99)
    passes = sum(ks_test(rng.normal(size=2000), rng.normal(size=2000))[1] > 0.05 for _ in range(100))
    assert passes >= 90


# -- geometric law -----------------------------------------------------------------------------


def test_geometric_fit_on_geometric_samples(rng):
    times = rng.geometric(0.08, 100_000)
    fit = geometric_fit(times)
    assert fit.p_inside == pytest.approx(0.92, abs=0.002)
    assert abs(fit.slope - math.log(fit.p_inside)) < 3 * fit.slope_se
    assert fit.p_value > 0.001


def test_geometric_fit_p_value_matches_scipy(rng):
    times = rng.geometric(0.3, 5000)
    fit = geometric_fit(times)
    q = 1 / times.mean()
    p = 1 - q
    K = fit.dof + 1
    counts = np.bincount(times, minlength=K + 1)[1 : K + 1]
    obs = np.append(counts, times.size - counts.sum())
    exp = np.append(times.size * q * p ** np.arange(K), times.size * p**K)
    ref = scipy.stats.chisquare(obs, exp, ddof=1)
    assert fit.chi2 == pytest.approx(ref.statistic, rel=1e-10)
    assert fit.p_value == pytest.approx(ref.pvalue, rel=1e-8)


def test_geometric_fit_rejects_non_geometric(rng):
    times = np.concatenate([rng.geometric(0.5, 20_000), rng.geometric(0.02, 20_000)])
    assert geometric_fit(times).p_value < 1e-6


def test_geometric_fit_errors():
    with pytest.raises(StatsError):
        geometric_fit([1, 1, 1])
    with pytest.raises(StatsError):
        geometric_fit([0, 2])


# -- writers --------------------------------------------------------------------------------


def test_writers_embed_fingerprint(tmp_path):
    pf = empirical_pf([1.0, 2.0, 2.5, 4.0], "linear", 2)
    paths = [
        write_pf_csv(tmp_path / "pf.csv", pf, "fp1", units="steps"),
        write_acf_csv(tmp_path / "acf.csv", autocorrelation(np.arange(10.0) ** 2, 3), "fp1"),
        write_summary(tmp_path / "s.txt", {"met": np.float64(2.5), "n": 3, "shape": "ok"}, "fp1"),
    ]
    for p in paths:
        assert p.read_text().splitlines()[0] == "# fingerprint: fp1"
    body = [l for l in paths[0].read_text().splitlines() if not l.startswith("#")]
    assert body[0] == "bin_left,bin_right,density,count"
    np.testing.assert_allclose([float(l.split(",")[2]) for l in body[1:]], pf.densities)
    assert "met = 2.5" in paths[2].read_text()
