"""Streaming n-sigma scoring of decomposition residuals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from numba import njit

from .core import Config, NonFiniteInput, TimeSeries


@njit(cache=True)
def nsigma_score(stats, r):
    """Score of ``r`` against ``stats = [count, sum, sum_squared]``; -1 when empty."""
    count = stats[0]
    if count <= 0:
        return -1.0
    mean = stats[1] / count
    var = stats[2] / count - mean * mean
    std = math.sqrt(var) if var > 0.0 else 0.0
    floor = 1e-9 * max(1.0, abs(mean))
    if std < floor:
        std = floor
    return abs(r - mean) / std


@njit(cache=True)
def nsigma_push(stats, r):
    stats[0] += 1.0
    stats[1] += r
    stats[2] += r * r


@dataclass
class NSigmaStats:
    """Cumulative count, sum and sum of squares of the residuals seen so far."""

    count: int = 0
    sum: float = 0.0
    sum_squared: float = 0.0

    @property
    def mean(self) -> float:
        return self.sum / self.count if self.count else 0.0

    @property
    def variance(self) -> float:
        if not self.count:
            return 0.0
        m = self.mean
        return self.sum_squared / self.count - m * m

    def as_array(self) -> np.ndarray:
        return np.array([float(self.count), self.sum, self.sum_squared])

    @classmethod
    def from_array(cls, a: np.ndarray) -> "NSigmaStats":
        return cls(int(a[0]), float(a[1]), float(a[2]))

    @classmethod
    def from_values(cls, r) -> "NSigmaStats":
        stats = cls()
        for x in np.asarray(r, float):
            stats.push(float(x))
        return stats

    def push(self, r: float) -> None:
        self.count += 1
        self.sum += r
        self.sum_squared += r * r


def nsigma_update(stats: NSigmaStats, r: float, n: float) -> Tuple[bool, Optional[float], NSigmaStats]:
    """Score ``r`` against the history, then add it to the history.

    Returns ``(is_anomaly, score, stats)``; ``score`` is ``None`` for the
    first value ever seen. ``stats`` is updated in place.
    """
    if not math.isfinite(r):
        raise NonFiniteInput("residual is not finite")
    if not n > 0:
        raise ValueError("n must be > 0")
    raw = nsigma_score(stats.as_array(), float(r))
    score = None if raw < 0 else float(raw)
    is_anomaly = score is not None and score > n
    stats.push(float(r))
    return is_anomaly, score, stats


def detect_stream(series, cfg: Config) -> List[Tuple[float, bool]]:
    """Score every point of ``series``.

    The first ``t0`` points seed the decomposer and receive score 0. Online
    points are scored by the n-sigma rule on their decomposed residual.
    """
    from .decomposer import OneShotSTL

    values = series.values if isinstance(series, TimeSeries) else TimeSeries(series).values
    t0 = cfg.t0
    if values.size <= t0:
        raise ValueError(f"series length {values.size} must exceed init_len {t0}")
    engine = OneShotSTL.initialize(values[:t0], cfg)
    out: List[Tuple[float, bool]] = [(0.0, False)] * t0
    for y in values[t0:]:
        pt = engine.update(float(y))
        out.append((pt.score if pt.score is not None else 0.0, pt.is_anomaly))
    return out
