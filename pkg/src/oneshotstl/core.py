"""Shared types, configuration and error classes."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class InvalidConfig(ValueError):
    """Raised when a :class:`Config` violates one of its constraints."""


class NonFiniteInput(ValueError):
    """Raised when NaN or infinite values reach the decomposition."""


class NotInitialized(RuntimeError):
    """Raised when a streaming operation runs before initialization."""


class SolverFailure(RuntimeError):
    """Raised when a linear solve breaks down (non-positive pivot)."""


@dataclass(frozen=True)
class Config:
    """Hyper-parameters of the streaming decomposition.

    Parameters
    ----------
    period : int
        Samples per seasonal cycle.
    shift_window : int
        Largest phase correction (in samples) tried when a residual spike
        triggers the seasonality-shift search.
    lambda1, lambda2 : float
        Weights of the l1 penalties on first and second trend differences.
    max_iters : int
        Number of reweighting iterations per point.
    nsigma_n : float
        Anomaly threshold in standard deviations.
    init_len : int
        Number of leading points decomposed in batch to seed the stream.
    ridge : float or None
        Weight of the ``sum(s**2)`` anchor added to the batch system. ``None``
        selects ``1e-8 * N`` for a batch of length ``N``.
    weight_floor : float
        Floor on the absolute differences inside the reweighting formulas.
    warm_len : int
        Number of trailing init points replayed through the online path so
        the first streamed point continues an existing factorization.
    batch_tol : float or None
        Optional relative-change early exit for the batch solver.
    """

    period: int
    shift_window: int = 20
    lambda1: float = 1.0
    lambda2: float = 1.0
    max_iters: int = 8
    nsigma_n: float = 5.0
    init_len: Optional[int] = None
    ridge: Optional[float] = None
    weight_floor: float = 1e-10
    warm_len: int = 8
    batch_tol: Optional[float] = None

    @property
    def t0(self) -> int:
        return 4 * self.period if self.init_len is None else self.init_len

    def ridge_for(self, n: int) -> float:
        return 1e-8 * n if self.ridge is None else self.ridge

    @classmethod
    def with_lambda(cls, period: int, lam: float, **kwargs) -> "Config":
        return cls(period=period, lambda1=lam, lambda2=lam, **kwargs)


def validate_config(cfg: Config) -> Config:
    """Check every constraint of ``cfg`` and return it unchanged."""
    T = cfg.period
    if not isinstance(T, (int, np.integer)) or T < 2:
        raise InvalidConfig("T >= 2 required (period)")
    if cfg.shift_window < 0:
        raise InvalidConfig("H must be >= 0")
    if cfg.shift_window >= T:
        raise InvalidConfig("H must be < T")
    if cfg.max_iters < 1:
        raise InvalidConfig("I >= 1 required (max_iters)")
    if not cfg.nsigma_n > 0:
        raise InvalidConfig("n must be > 0")
    for name in ("lambda1", "lambda2"):
        lam = getattr(cfg, name)
        if not math.isfinite(lam) or lam < 0:
            raise InvalidConfig(f"{name} must be finite and >= 0")
    if cfg.lambda1 == 0 and cfg.lambda2 == 0:
        raise InvalidConfig("lambda1 and lambda2 must not both be zero")
    if cfg.t0 < 2 * T:
        raise InvalidConfig("t0 >= 2T required (init_len)")
    if not cfg.weight_floor > 0:
        raise InvalidConfig("weight_floor must be > 0")
    if cfg.ridge is not None and cfg.ridge < 0:
        raise InvalidConfig("ridge must be >= 0")
    if cfg.warm_len < 0:
        raise InvalidConfig("warm_len must be >= 0")
    if cfg.t0 < 4 * T:
        warnings.warn(
            f"init_len={cfg.t0} is shorter than 4 periods ({4 * T}); "
            "the seasonal buffer may be poorly estimated",
            stacklevel=2,
        )
    return cfg


@dataclass(frozen=True)
class DecompPoint:
    """Decomposition of one observation; ``residual`` is ``value - (trend + seasonal)``."""

    trend: float
    seasonal: float
    residual: float
    shift: int = 0
    score: Optional[float] = None
    is_anomaly: bool = False

    @classmethod
    def from_value(cls, y: float, trend: float, seasonal: float, **kwargs) -> "DecompPoint":
        return cls(trend, seasonal, exact_residual(y, trend, seasonal), **kwargs)


def exact_residual(y: float, trend: float, seasonal: float) -> float:
    """Residual ``r`` such that ``(trend + seasonal) + r == y`` in floating point when possible.

    Plain ``y - (trend + seasonal)`` can be off by an ulp after rounding; the
    result is nudged by at most a few ulps until the sum reproduces ``y``.
    """
    base = trend + seasonal
    r = y - base
    for _ in range(4):
        total = base + r
        if total == y:
            break
        r = math.nextafter(r, math.inf if total < y else -math.inf)
    else:
        r = y - base
    return r


@dataclass(frozen=True)
class TimeSeries:
    values: np.ndarray
    timestamps: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("a time series needs at least one value")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise NonFiniteInput(f"non-finite value at position {bad}")
        object.__setattr__(self, "values", values)
        if self.timestamps is not None:
            ts = np.asarray(self.timestamps, dtype=np.int64)
            if ts.shape != values.shape:
                raise ValueError("timestamps and values differ in length")
            if ts.size > 1 and np.any(np.diff(ts) <= 0):
                raise ValueError("timestamps must be strictly increasing")
            object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return self.values.size


def as_finite_array(y: Sequence[float]) -> np.ndarray:
    arr = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("input contains NaN or infinite values")
    return arr
