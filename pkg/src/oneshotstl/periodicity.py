"""Period detection by autocorrelation and grid tuning of the trend penalty."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np

from .batch import joint_stl
from .core import SolverFailure, as_finite_array

DEFAULT_LAMBDA_GRID = (1.0, 10.0, 100.0, 1000.0, 10000.0)
ACF_THRESHOLD = 0.1


class NoPeriod(ValueError):
    """No autocorrelation peak qualifies as a period."""


@dataclass(frozen=True)
class PeriodEstimate:
    period: int
    acf_peak: float


def autocorrelation(y, max_lag: int) -> np.ndarray:
    """Biased sample autocorrelation of the mean-removed series for lags ``0..max_lag``."""
    x = as_finite_array(y)
    x = x - x.mean()
    n = x.size
    nfft = 1 << int(2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1]
    if acov[0] <= 0:
        return np.zeros(max_lag + 1)
    return acov / acov[0]


def estimate_period(y, min_lag: int = 2, max_lag: Optional[int] = None) -> PeriodEstimate:
    """Lag of the highest strict local ACF maximum in ``[min_lag, max_lag]`` above 0.1.

    Lags before the first non-positive ACF value are skipped: on the initial
    decay, noise produces strict maxima that are not periods.
    """
    x = as_finite_array(y)
    n = x.size
    if max_lag is None:
        max_lag = n // 2
    if not 2 <= min_lag < max_lag <= n // 2:
        raise ValueError(f"need 2 <= min_lag < max_lag <= {n // 2}, got {min_lag}, {max_lag}")
    if n < 4 * min_lag:
        raise ValueError(f"series of length {n} is too short for min_lag={min_lag}")
    if np.ptp(x) == 0:
        raise NoPeriod("constant series")
    # one extra lag so max_lag itself can be checked against its right neighbour
    acf = autocorrelation(x, min(max_lag + 1, n - 1))
    nonpos = np.flatnonzero(acf[1:] <= 0)
    if nonpos.size == 0:
        raise NoPeriod("autocorrelation never decays to zero")
    start = max(min_lag, int(nonpos[0]) + 1)
    best = None
    for k in range(start, max_lag + 1):
        right = acf[k + 1] if k + 1 < acf.size else -np.inf
        if acf[k] > acf[k - 1] and acf[k] > right and acf[k] > ACF_THRESHOLD:
            if best is None or acf[k] > acf[best]:
                best = k
    if best is None:
        raise NoPeriod("no autocorrelation peak above threshold")
    return PeriodEstimate(int(best), float(acf[best]))


def classical_trend(y, period: int) -> np.ndarray:
    """Centred moving average of one period (2 x T for even T); NaN where undefined."""
    x = as_finite_array(y)
    T = int(period)
    if T % 2:
        w = np.full(T, 1.0 / T)
    else:
        w = np.full(T + 1, 1.0 / T)
        w[0] = w[-1] = 0.5 / T
    half = w.size // 2
    out = np.full(x.size, np.nan)
    if x.size >= w.size:
        out[half : x.size - half] = np.convolve(x, w, mode="valid")
    return out


def tune_lambda(y_train, period: int, grid: Iterable[float] = DEFAULT_LAMBDA_GRID,
                max_iters: int = 8) -> Tuple[float, float]:
    """Pick the grid value whose batch trend is closest (MAE) to the classical trend.

    Ties go to the larger value; grid values whose solve fails are skipped.
    """
    x = as_finite_array(y_train)
    values = sorted({float(g) for g in grid}, reverse=True)
    if not values:
        raise ValueError("grid must not be empty")
    if x.size < 2 * period:
        raise ValueError("y_train must hold at least two periods")
    ref = classical_trend(x, period)
    ok = ~np.isnan(ref)
    best: Optional[Tuple[float, float]] = None
    for lam in values:
        try:
            trend = joint_stl(x, period, lam, lam, max_iters=max_iters).trend
        except SolverFailure:
            continue
        mae = float(np.mean(np.abs(trend[ok] - ref[ok])))
        if best is None or mae < best[1]:
            best = (lam, mae)
    if best is None:
        raise SolverFailure("every grid value failed")
    return best
