"""Distribution estimates and statistical comparisons.

Empirical probability functions (density-normalised histograms), moments,
autocorrelation, and chi-square / Kolmogorov-Smirnov comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats as sps


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class EmpiricalPF:
    bin_edges: np.ndarray
    densities: np.ndarray
    counts: np.ndarray
    n_samples: int
    binning: str

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def centers(self) -> np.ndarray:
        if self.binning == "logarithmic":
            return np.sqrt(self.bin_edges[:-1] * self.bin_edges[1:])
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


@dataclass(frozen=True)
class MomentSummary:
    mean: float
    std: float
    skewness: float
    kurtosis: float
    n: int


@dataclass(frozen=True)
class AcfResult:
    lags: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class GofResult:
    chi2: float
    chi2_reduced: float
    ks_d: float
    ks_p: float


def _bin_edges(x: np.ndarray, binning: str, n_bins: int, range_):
    lo, hi = (float(x.min()), float(x.max())) if range_ is None else map(float, range_)
    if binning == "linear":
        if hi <= lo:
            raise StatsError("degenerate sample: all values equal")
        return np.linspace(lo, hi, n_bins + 1)
    if binning == "logarithmic":
        if lo <= 0:
            raise StatsError("logarithmic binning needs positive samples")
        if hi <= lo:
            hi = lo * (1.0 + 1e-9)
        return np.geomspace(lo, hi, n_bins + 1)
    raise StatsError(f"binning must be 'linear' or 'logarithmic', got {binning!r}")


def empirical_pf(samples, binning: str = "linear", n_bins: int = 50,
                 range: tuple[float, float] | None = None) -> EmpiricalPF:
    """Density-normalised histogram; ``range`` defaults to the sample extent.

    Samples outside an explicit ``range`` are excluded from the normalisation.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise StatsError("need at least 2 samples")
    if n_bins < 2:
        raise StatsError("need at least 2 bins")
    if not np.all(np.isfinite(x)):
        raise StatsError("samples must be finite")
    edges = _bin_edges(x, binning, n_bins, range)
    counts, edges = np.histogram(x, bins=edges)
    total = counts.sum()
    if total == 0:
        raise StatsError("no samples inside the binning range")
    with np.errstate(over="ignore", divide="ignore"):
        dens = counts / (total * np.diff(edges))
    if not np.all(np.isfinite(dens)):
        raise StatsError("sample range too narrow for the requested bins")
    return EmpiricalPF(edges, dens, counts, int(total), binning)


def pf_on_edges(samples, ref: EmpiricalPF) -> EmpiricalPF:
    """Histogram of ``samples`` on the bin edges of ``ref``."""
    x = np.asarray(samples, dtype=float)
    counts, _ = np.histogram(x, bins=ref.bin_edges)
    total = counts.sum()
    if total == 0:
        raise StatsError("no samples inside the reference bins")
    return EmpiricalPF(ref.bin_edges.copy(), counts / (total * ref.widths), counts, int(total), ref.binning)


def moments(series) -> MomentSummary:
    """Mean, sample std (n-1), skewness and excess kurtosis.

    Skewness and kurtosis are the standardised third and fourth central
    moments (population normalisation), the latter minus 3.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 4:
        raise StatsError("need at least 4 samples")
    mean = x.mean()
    d = x - mean
    m2 = np.mean(d * d)
    if m2 <= 0:
        raise StatsError("zero variance: skewness and kurtosis undefined")
    m3 = np.mean(d**3)
    m4 = np.mean(d**4)
    return MomentSummary(
        mean=float(mean),
        std=float(math.sqrt(m2 * n / (n - 1))),
        skewness=float(m3 / m2**1.5),
        kurtosis=float(m4 / (m2 * m2) - 3.0),
        n=n,
    )


def autocorrelation(series, max_lag: int) -> AcfResult:
    """Biased autocorrelation estimator, computed with an FFT."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if max_lag < 0 or not max_lag < n / 2:
        raise StatsError(f"max_lag must be < len(series)/2 = {n / 2}")
    d = x - x.mean()
    denom = float(np.dot(d, d))
    if denom == 0:
        raise StatsError("constant series has no autocorrelation")
    size = 1 << int(math.ceil(math.log2(2 * n)))
    f = np.fft.rfft(d, size)
    acov = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1]
    vals = acov / denom
    vals[0] = 1.0
    return AcfResult(np.arange(max_lag + 1), np.clip(vals, -1.0, 1.0))


def log_abs_return_series(returns) -> tuple[np.ndarray, int]:
    """``ln|r|`` for every non-zero return, plus the number of zeros dropped."""
    r = np.asarray(returns, dtype=float)
    if r.size == 0:
        raise StatsError("empty return series")
    nz = r != 0
    dropped = int(r.size - np.count_nonzero(nz))
    if dropped == r.size:
        raise StatsError("all returns are zero")
    return np.log(np.abs(r[nz])), dropped


def chi_square(pf_model: EmpiricalPF, pf_ref: EmpiricalPF) -> tuple[float, float]:
    """Density-form chi-square over bins where the reference density is positive.

    Reduced value divides by (included bins - 1).
    """
    if pf_model.bin_edges.shape != pf_ref.bin_edges.shape or not np.allclose(
        pf_model.bin_edges, pf_ref.bin_edges, rtol=1e-12, atol=0.0
    ):
        raise StatsError("chi_square needs identical bin edges")
    keep = pf_ref.densities > 0
    n = int(np.count_nonzero(keep))
    if n == 0:
        raise StatsError("reference PF has no positive bins")
    diff = pf_model.densities[keep] - pf_ref.densities[keep]
    chi2 = float(np.sum(diff * diff / pf_ref.densities[keep]))
    return chi2, (chi2 / (n - 1) if n > 1 else float("nan"))


def kolmogorov_q(lam: float) -> float:
    """Asymptotic Kolmogorov tail probability ``2 sum (-1)^(k-1) exp(-2 k^2 lam^2)``.

    For small ``lam`` the equivalent theta-function series is summed instead.
    """
    if lam <= 0:
        return 1.0
    if lam < 1.18:
        y = math.exp(-math.pi**2 / (8.0 * lam * lam))
        s = 0.0
        for k in range(1, 40, 2):
            term = y ** (k * k)
            s += term
            if term < 1e-17:
                break
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / lam * s))
    s = 0.0
    for k in range(1, 101):
        term = math.exp(-2.0 * k * k * lam * lam)
        s += term if k % 2 else -term
        if term < 1e-17:
            break
    return min(1.0, max(0.0, 2.0 * s))


def ks_statistic(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    pooled = np.concatenate([a, b])
    # integer cross-multiplied counts, one rounding at the final division
    ca = np.searchsorted(a, pooled, side="right").astype(np.int64)
    cb = np.searchsorted(b, pooled, side="right").astype(np.int64)
    gap = int(np.max(np.abs(ca * b.size - cb * a.size)))
    return gap / (a.size * b.size)


def ks_test(samples_a, samples_b) -> tuple[float, float]:
    """Two-sample K-S test, returning ``(D, P)``.

    P uses the asymptotic Kolmogorov law with
    ``lam = D (sqrt(ne) + 0.12 + 0.11 / sqrt(ne))``, ``ne = na nb / (na + nb)``.
    """
    na, nb = np.size(samples_a), np.size(samples_b)
    if na == 0 or nb == 0:
        raise StatsError("ks_test needs two non-empty samples")
    d = ks_statistic(samples_a, samples_b)
    ne = na * nb / (na + nb)
    sq = math.sqrt(ne)
    return d, kolmogorov_q(d * (sq + 0.12 + 0.11 / sq))


def compare(samples_model, samples_ref, binning: str = "logarithmic", n_bins: int = 30) -> GofResult:
    """Chi-square on shared bins plus K-S on the raw samples."""
    ref = empirical_pf(samples_ref, binning, n_bins)
    model = pf_on_edges(samples_model, ref)
    chi2, red = chi_square(model, ref)
    d, p = ks_test(samples_model, samples_ref)
    return GofResult(chi2, red, d, p)


# -- escape-time laws -------------------------------------------------------


@dataclass(frozen=True)
class GeometricFit:
    """Geometric-law fit of integer escape times ``n >= 1``.

    ``p_inside`` is the MLE of the per-step survival probability; ``slope`` is
    the weighted least-squares slope of ``ln count`` against ``n``.
    """

    p_inside: float
    chi2: float
    dof: int
    p_value: float
    slope: float
    slope_se: float


def geometric_fit(times, min_expected: float = 5.0) -> GeometricFit:
    n = np.asarray(times, dtype=np.int64)
    if n.size < 2 or np.any(n < 1):
        raise StatsError("need at least 2 escape times, all >= 1")
    mean = n.mean()
    if mean <= 1.0:
        raise StatsError("escape times are all 1: survival probability is zero")
    q = 1.0 / mean
    p = 1.0 - q
    total = n.size
    # explicit classes 1..K each expect >= min_expected events; the rest is one tail class
    K = 0
    while total * q * p**K >= min_expected:
        K += 1
    ks = np.arange(1, K + 1)
    obs = np.bincount(n, minlength=K + 1)[1 : K + 1].astype(float)
    exp = total * q * p ** (ks - 1)
    o = np.append(obs, total - obs.sum())
    e = np.append(exp, total * p**K)
    chi2 = float(np.sum((o - e) ** 2 / e))
    dof = o.size - 2
    pval = float(sps.chi2.sf(chi2, dof)) if dof > 0 else float("nan")
    # log-linear slope over classes with counts
    mask = obs > 0
    x = ks[mask].astype(float)
    y = np.log(obs[mask])
    w = obs[mask]
    sw = w.sum()
    xm = np.sum(w * x) / sw
    ym = np.sum(w * y) / sw
    sxx = np.sum(w * (x - xm) ** 2)
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    slope_se = float(1.0 / math.sqrt(sxx))
    return GeometricFit(p, chi2, dof, pval, slope, slope_se)


def fit_decay_time(acf: AcfResult, first_lag: int = 1, last_lag: int | None = None) -> float:
    """Decay time of an exponentially decaying ACF from a log-linear fit.

    Lags whose ACF is not positive are excluded.
    """
    lags = acf.lags
    vals = acf.values
    last = lags[-1] if last_lag is None else last_lag
    sel = (lags >= first_lag) & (lags <= last) & (vals > 0)
    if np.count_nonzero(sel) < 2:
        raise StatsError("need at least two positive ACF values to fit a decay time")
    slope, _ = np.polyfit(lags[sel].astype(float), np.log(vals[sel]), 1)
    if slope >= 0:
        raise StatsError("ACF does not decay")
    return float(-1.0 / slope)


# -- output ---------------------------------------------------------------


def write_pf_csv(path, pf: EmpiricalPF, fp: str, **meta) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# fingerprint: {fp}\n# binning: {pf.binning}\n# n_samples: {pf.n_samples}\n")
        for k, v in meta.items():
            fh.write(f"# {k}: {v}\n")
        fh.write("bin_left,bin_right,density,count\n")
        for lo, hi, d, c in zip(pf.bin_edges[:-1], pf.bin_edges[1:], pf.densities, pf.counts):
            fh.write(f"{float(lo)!r},{float(hi)!r},{float(d)!r},{int(c)}\n")
    return path


def write_acf_csv(path, acf: AcfResult, fp: str, **meta) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# fingerprint: {fp}\n")
        for k, v in meta.items():
            fh.write(f"# {k}: {v}\n")
        fh.write("lag,acf\n")
        for lag, v in zip(acf.lags, acf.values):
            fh.write(f"{int(lag)},{float(v)!r}\n")
    return path


def write_summary(path, values: dict, fp: str) -> Path:
    """Flat ``key = value`` text summary."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# fingerprint: {fp}\n")
        for k, v in values.items():
            fh.write(f"{k} = {float(v)!r}\n" if isinstance(v, float) else f"{k} = {v}\n")
    return path
