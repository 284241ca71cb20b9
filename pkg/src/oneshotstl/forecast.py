"""Seasonal-naive forecasts from a live decomposer.

The forecast for ``i`` steps past the last processed point is the last trend
held flat plus the most recent seasonal value at the target phase.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .core import NotInitialized
from .decomposer import OneShotSTL


def _check(state: Optional[OneShotSTL]) -> OneShotSTL:
    if state is None:
        raise NotInitialized("decomposer has not been initialized")
    return state


def forecast_step(state: OneShotSTL, i: int) -> float:
    """Forecast ``i >= 1`` steps after the last processed observation."""
    state = _check(state)
    if i < 1:
        raise ValueError("forecast step must be >= 1")
    T = state.cfg.period
    hist = state.seasonal.values
    t_last = state.t - 1
    # latest value at the phase of t_last + i, which lies within the last period
    src = t_last + (i - 1) % T + 1 - T
    return state.last_trend + float(hist[src % hist.size])


def forecast_horizon(state: OneShotSTL, h: int) -> np.ndarray:
    """Forecasts for steps ``1..h``."""
    state = _check(state)
    if h < 1:
        raise ValueError("horizon must be >= 1")
    T = state.cfg.period
    hist = state.seasonal.values
    t_last = state.t - 1
    src = t_last + np.arange(h) % T + 1 - T
    return state.last_trend + hist[src % hist.size]
