"""Daily closing-price tables and their empirical escape times.

Input CSV layout: a header ``date,TICKER1,TICKER2,...`` followed by one row per
trading day (ISO date, decimal prices with ``.`` as separator, UTF-8).  Every
stock must be present on every day unless gaps are explicitly allowed, in
which case an empty cell marks a missing price.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .escape import ReturnThresholds, return_series_escape_times


class PriceTableError(ValueError):
    """Malformed price file; the message names the offending line and column."""


@dataclass
class PriceTable:
    tickers: list[str]
    dates: list[str]
    prices: np.ndarray  # (n_days, n_stocks); NaN marks an allowed gap

    @property
    def n_days(self) -> int:
        return self.prices.shape[0]

    @property
    def n_stocks(self) -> int:
        return self.prices.shape[1]

    def series(self, ticker: str) -> np.ndarray:
        return self.prices[:, self.tickers.index(ticker)]


@dataclass
class ReturnTable:
    tickers: list[str]
    returns: list[np.ndarray]
    sigmas: np.ndarray


def load_price_table(path, allow_gaps: bool = False) -> PriceTable:
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise PriceTableError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0].lower() != "date":
        raise PriceTableError(f"{path}:1: header must be 'date,TICKER1,...', got {','.join(header)!r}")
    tickers = header[1:]
    if len(set(tickers)) != len(tickers) or any(not t for t in tickers):
        raise PriceTableError(f"{path}:1: tickers must be non-empty and unique")
    dates: list[str] = []
    data: list[list[float]] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise PriceTableError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            dt.date.fromisoformat(row[0].strip())
        except ValueError:
            raise PriceTableError(f"{path}:{lineno}: column 'date': not an ISO date: {row[0]!r}") from None
        values = []
        for col, cell in zip(tickers, row[1:]):
            cell = cell.strip()
            if not cell:
                if not allow_gaps:
                    raise PriceTableError(f"{path}:{lineno}: column {col!r}: missing price")
                values.append(math.nan)
                continue
            try:
                price = float(cell)
            except ValueError:
                raise PriceTableError(f"{path}:{lineno}: column {col!r}: not a number: {cell!r}") from None
            if not (price > 0 and math.isfinite(price)):
                raise PriceTableError(f"{path}:{lineno}: column {col!r}: price must be > 0, got {cell!r}")
            values.append(price)
        dates.append(row[0].strip())
        data.append(values)
    if len(data) < 2:
        raise PriceTableError(f"{path}: need at least 2 trading days, got {len(data)}")
    return PriceTable(tickers, dates, np.array(data, dtype=float))


def returns_from_prices(prices, kind: str = "log") -> np.ndarray:
    """Log returns ``ln p[t+1] - ln p[t]`` (or simple returns with ``kind='simple'``)."""
    p = np.asarray(prices, dtype=float)
    if p.size < 2:
        raise ValueError("need at least 2 prices")
    if np.any(p <= 0):
        raise ValueError("prices must be > 0")
    if kind == "log":
        return np.diff(np.log(p))
    if kind == "simple":
        return p[1:] / p[:-1] - 1.0
    raise ValueError(f"kind must be 'log' or 'simple', got {kind!r}")


def return_table(table: PriceTable, kind: str = "log") -> ReturnTable:
    """Per-stock returns and full-period sample standard deviations.

    With gaps, only returns between consecutive days that both carry a price
    are kept.
    """
    rets, sigmas = [], []
    for j in range(table.n_stocks):
        p = table.prices[:, j]
        if np.isnan(p).any():
            lp = np.log(p) if kind == "log" else p
            r = np.diff(lp) if kind == "log" else p[1:] / p[:-1] - 1.0
            r = r[np.isfinite(r)]
        else:
            r = returns_from_prices(p, kind)
        rets.append(r)
        sigmas.append(float(np.std(r, ddof=1)) if r.size > 1 else 0.0)
    return ReturnTable(list(table.tickers), rets, np.array(sigmas))


def empirical_escape_dataset(table: ReturnTable, k_i: float = -0.1, k_f: float = -2.0) -> np.ndarray:
    """Pooled escape times (in trading days) over all stocks.

    Each stock uses its own thresholds ``(k_i sigma_i, k_f sigma_i)``.
    """
    if not k_f < k_i < 0:
        raise ValueError(f"need k_f < k_i < 0, got k_i={k_i}, k_f={k_f}")
    pooled = []
    for ticker, r, s in zip(table.tickers, table.returns, table.sigmas):
        if not s > 0:
            warnings.warn(f"{ticker}: zero return variance, skipped", stacklevel=2)
            continue
        pooled.append(return_series_escape_times(r, ReturnThresholds.from_sigma(s, k_i, k_f)))
    if not pooled:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(pooled)


def write_escape_times(path, times, fp: str) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# fingerprint: {fp}\n")
        for t in np.asarray(times, dtype=np.int64):
            fh.write(f"{int(t)}\n")
    return path


def read_escape_times(path) -> np.ndarray:
    return np.loadtxt(path, comments="#", dtype=np.int64, ndmin=1)
