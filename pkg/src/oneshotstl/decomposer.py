"""Constant-time streaming seasonal-trend decomposition.

Each reweighting iteration ``i`` owns a growing window system whose
factorization is extended by two rows per point (see :mod:`.banded`). The
iterations are chained: the trend emitted by iteration ``i`` at time ``t``
sets the newest difference weights of iteration ``i + 1``. The result of the
last iteration is the output for the point.

All per-stream state lives in a handful of small fixed-size arrays so the
whole update (all iterations, the residual scoring and, when triggered, the
phase-shift search) runs in a single compiled call.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import List, Optional, Tuple

import numpy as np
from numba import njit

from .anomaly import NSigmaStats, nsigma_push, nsigma_score
from .banded import BETA, CARRY, NEW, STEP, WIN, OnlineFactorState, _commit, _extend_factor, _extend_solve
from .batch import Decomposition, fill_tail_block, joint_stl
from .core import (
    Config,
    DecompPoint,
    NonFiniteInput,
    NotInitialized,
    SolverFailure,
    as_finite_array,
    validate_config,
)

SNAPSHOT_VERSION = 1

# meta slots returned by the kernel
_M_SHIFT, _M_OPS, _M_SEARCHED, _M_BAD = range(4)
# out slots
_O_TAU, _O_S, _O_R, _O_SCORE, _O_PLAIN_SCORE = range(5)


@dataclass
class SeasonalBuffer:
    """Ring of the last ``T + H`` emitted seasonal values, slot ``t mod (T + H)``.

    The anchor for time ``t`` under shift ``delta`` is the value emitted at
    ``t - T + delta``: one period back, moved by ``delta`` samples. With
    ``H < T`` every such value is older than ``t`` and still held.
    """

    values: np.ndarray
    period: int

    def __post_init__(self):
        if self.values.size < self.period:
            raise ValueError("seasonal history must hold at least one period")

    @property
    def shift_window(self) -> int:
        return self.values.size - self.period

    def index(self, t: int) -> int:
        return t % self.values.size

    def reference(self, t: int, delta: int = 0) -> float:
        if abs(delta) > self.shift_window:
            raise ValueError(f"shift {delta} outside the window of {self.shift_window}")
        return float(self.values[self.index(t - self.period + delta)])

    def write(self, t: int, value: float) -> None:
        self.values[self.index(t)] = value

    def next_cycle(self, t: int) -> np.ndarray:
        """Seasonal values for times ``t, t+1, ..., t+T-1`` (the latest value at each phase)."""
        return self.values[(np.arange(t, t + self.period) - self.period) % self.values.size].copy()

    @classmethod
    def from_seasonal(cls, seasonal: np.ndarray, period: int, shift_window: int = 0) -> "SeasonalBuffer":
        """History holding the tail of ``seasonal``, whose last entry is time ``len - 1``."""
        n = seasonal.size
        size = period + shift_window
        if n < size:
            raise ValueError("not enough seasonal values to fill the history")
        values = np.empty(size)
        idx = np.arange(n - size, n)
        values[idx % size] = seasonal[idx]
        return cls(values, period)


@dataclass
class IterationState:
    """State of one reweighting iteration (views into the engine arrays)."""

    factor: OnlineFactorState
    last_tau: float
    last_tau2: float
    recent_p: np.ndarray
    recent_q: np.ndarray


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def _shift_in(a, x):
    n = a.shape[0]
    for k in range(n - 1):
        a[k] = a[k + 1]
    a[n - 1] = x


@njit(cache=True)
def _run_point(y, u, m, lam1, lam2, eps, Lo, Do, zo, taus, rp, rq, ry, ru, Lw0, Dw0, use0):
    """Run all iterations for one point, mutating the state arrays in place.

    When ``use0`` is set, iteration 0 reuses the factorization extension in
    ``Lw0``/``Dw0`` (its block does not depend on the seasonal anchor).
    Returns ``(tau, s, bad, ops)``; ``bad`` is -1 or the iteration whose
    factorization failed.
    """
    n_iter = Lo.shape[0]
    A = np.empty((NEW, NEW))
    b = np.empty(NEW)
    Lw = np.empty((WIN, WIN))
    Dw = np.empty(WIN)
    zw = np.empty(WIN)
    _shift_in(ry, y)
    _shift_in(ru, u)
    p_in = 1.0
    q_in = 1.0
    tau = 0.0
    s = 0.0
    ops = 0
    for i in range(n_iter):
        _shift_in(rp[i], p_in)
        _shift_in(rq[i], q_in)
        fill_tail_block(m, rp[i], rq[i], ry, ru, lam1, lam2, A, b)
        if i == 0 and use0:
            for r in range(WIN):
                Dw[r] = Dw0[r]
                for c in range(WIN):
                    Lw[r, c] = Lw0[r, c]
        else:
            bad, f_ops = _extend_factor(Lo[i], Do[i], A, Lw, Dw)
            ops += f_ops
            if bad >= 0:
                return tau, s, i, ops
        tau, s, s_ops = _extend_solve(Lw, Dw, zo[i], b, zw)
        ops += s_ops
        _commit(Lo[i], Do[i], zo[i], Lw, Dw, zw)
        prev = taus[i, 1]
        prev2 = taus[i, 0]
        d1 = abs(tau - prev)
        d2 = abs(tau - 2.0 * prev + prev2)
        p_in = 1.0 / (2.0 * max(d1, eps))
        q_in = 1.0 / (2.0 * max(d2, eps))
        taus[i, 0] = prev
        taus[i, 1] = tau
    return tau, s, -1, ops


@njit(cache=True)
def _copy_state(Lo, Do, zo, taus, rp, rq, ry, ru, cLo, cDo, czo, ctaus, crp, crq, cry, cru):
    cLo[:] = Lo
    cDo[:] = Do
    czo[:] = zo
    ctaus[:] = taus
    crp[:] = rp
    crq[:] = rq
    cry[:] = ry
    cru[:] = ru


@njit(cache=True)
def _process_point(
    y, t, m, warm, H, n_sigma, lam1, lam2, eps,
    T, v, Lo, Do, zo, taus, rp, rq, ry, ru, stats, out, meta,
):
    """Decompose one observation and commit the winning state.

    ``v`` is the seasonal history ring (see :class:`SeasonalBuffer`). The
    selected shift is returned in ``meta``.
    """
    L = v.shape[0]
    # plain candidate on scratch copies
    cLo = Lo.copy()
    cDo = Do.copy()
    czo = zo.copy()
    ctaus = taus.copy()
    crp = rp.copy()
    crq = rq.copy()
    cry = ry.copy()
    cru = ru.copy()
    dummyL = np.empty((WIN, WIN))
    dummyD = np.empty(WIN)
    u0 = v[(t - T) % L]
    tau, s, bad, ops = _run_point(y, u0, m, lam1, lam2, eps, cLo, cDo, czo, ctaus, crp, crq, cry, cru,
                                  dummyL, dummyD, False)
    meta[_M_OPS] = ops
    meta[_M_SHIFT] = 0
    meta[_M_SEARCHED] = 0
    meta[_M_BAD] = bad
    if bad >= 0:
        return
    r = y - tau - s
    best_shift = 0
    if warm:
        out[_O_SCORE] = -1.0
        out[_O_PLAIN_SCORE] = -1.0
    else:
        plain_score = nsigma_score(stats, r)
        out[_O_PLAIN_SCORE] = plain_score
        if H > 0 and plain_score > n_sigma:
            meta[_M_SEARCHED] = 1
            # iteration 0 sees all-ones weights, so its block is shared by every candidate
            A0 = np.empty((NEW, NEW))
            b0 = np.empty(NEW)
            Lw0 = np.empty((WIN, WIN))
            Dw0 = np.empty(WIN)
            rp0 = rp[0].copy()
            rq0 = rq[0].copy()
            _shift_in(rp0, 1.0)
            _shift_in(rq0, 1.0)
            fill_tail_block(m, rp0, rq0, ry, ru, lam1, lam2, A0, b0)
            bad0, f_ops = _extend_factor(Lo[0], Do[0], A0, Lw0, Dw0)
            ops += f_ops
            if bad0 < 0:
                best_abs = abs(r)
                dLo = Lo.copy()
                dDo = Do.copy()
                dzo = zo.copy()
                dtaus = taus.copy()
                drp = rp.copy()
                drq = rq.copy()
                dry = ry.copy()
                dru = ru.copy()
                for k in range(1, 2 * H + 1):
                    delta = (k + 1) // 2
                    if k % 2 == 1:
                        delta = -delta
                    _copy_state(Lo, Do, zo, taus, rp, rq, ry, ru, dLo, dDo, dzo, dtaus, drp, drq, dry, dru)
                    ud = v[(t - T + delta) % L]
                    dtau, ds, dbad, d_ops = _run_point(y, ud, m, lam1, lam2, eps, dLo, dDo, dzo, dtaus,
                                                       drp, drq, dry, dru, Lw0, Dw0, True)
                    ops += d_ops
                    if dbad >= 0:
                        continue
                    dr = y - dtau - ds
                    if abs(dr) < best_abs:
                        best_abs = abs(dr)
                        best_shift = delta
                        tau = dtau
                        s = ds
                        r = dr
                        _copy_state(dLo, dDo, dzo, dtaus, drp, drq, dry, dru,
                                    cLo, cDo, czo, ctaus, crp, crq, cry, cru)
            meta[_M_OPS] = ops
        score = nsigma_score(stats, r)
        out[_O_SCORE] = score
        nsigma_push(stats, r)
        v[t % L] = s
    meta[_M_SHIFT] = best_shift
    out[_O_TAU] = tau
    out[_O_S] = s
    out[_O_R] = r
    _copy_state(cLo, cDo, czo, ctaus, crp, crq, cry, cru, Lo, Do, zo, taus, rp, rq, ry, ru)


# ---------------------------------------------------------------------------
# engine


class OneShotSTL:
    """Streaming decomposer; one instance per time series.

    Create it with :meth:`initialize`, then feed observations to
    :meth:`update`.
    """

    def __init__(self, cfg: Config, seasonal: SeasonalBuffer, t: int, m: int,
                 Lo, Do, zo, taus, rp, rq, ry, ru, stats, ops: int = 0, level: float = 0.0):
        self.cfg = cfg
        # the kernel runs on y - level; floored weights amplify round-off in proportion to |y|
        self.level = level
        self.seasonal = seasonal
        self.t = t
        self.m = m
        self._Lo, self._Do, self._zo = Lo, Do, zo
        self._taus, self._rp, self._rq = taus, rp, rq
        self._ry, self._ru = ry, ru
        self._stats = stats
        self.ops = ops
        self.last_ops = 0
        self.last_searched = False
        self.last_plain_score: Optional[float] = None
        self.searches = 0
        self._out = np.zeros(5)
        self._meta = np.zeros(4, dtype=np.int64)
        self._cfg_args = (
            int(cfg.shift_window), float(cfg.nsigma_n), float(cfg.lambda1), float(cfg.lambda2),
            float(cfg.weight_floor),
        )

    # -- construction -------------------------------------------------------

    @classmethod
    def initialize(cls, y_init, cfg: Config) -> "OneShotSTL":
        """Decompose ``y_init`` in batch and prepare the stream state."""
        cfg = validate_config(cfg)
        y_init = as_finite_array(y_init)
        t0 = y_init.size
        T, I = cfg.period, cfg.max_iters
        if t0 < 2 * T:
            raise ValueError("t0 >= 2T required")
        level = float(np.median(y_init))
        init = joint_stl(y_init - level, T, cfg.lambda1, cfg.lambda2, I, cfg.ridge_for(t0), cfg.weight_floor,
                         cfg.batch_tol)
        seasonal = SeasonalBuffer.from_seasonal(init.seasonal, T, cfg.shift_window)
        k = min(cfg.warm_len, t0)
        Lo = np.zeros((I, CARRY, BETA))
        for c in range(BETA):
            Lo[:, c, c] = 1.0
        Do = np.ones((I, BETA))
        zo = np.zeros((I, BETA))
        seed1 = init.trend[t0 - k - 1] if t0 - k - 1 >= 0 else init.trend[0]
        seed2 = init.trend[t0 - k - 2] if t0 - k - 2 >= 0 else seed1
        taus = np.tile(np.array([seed2, seed1]), (I, 1))
        rp = np.ones((I, 3))
        rq = np.ones((I, 3))
        ry = np.zeros(3)
        ru = np.zeros(3)
        stats = NSigmaStats.from_values(init.residual).as_array()
        engine = cls(cfg, seasonal, t0 - k, 0, Lo, Do, zo, taus, rp, rq, ry, ru, stats, level=level)
        trend = init.trend + level
        engine.init_decomposition = Decomposition(trend, init.seasonal, y_init - trend - init.seasonal)
        for y in y_init[t0 - k:]:
            engine._step(float(y), warm=True)
        engine.ops = 0
        return engine

    # -- streaming ----------------------------------------------------------

    def _step(self, y: float, warm: bool = False):
        H, n_sigma, lam1, lam2, eps = self._cfg_args
        self.m += 1
        _process_point(
            y - self.level, self.t, self.m, warm, H, n_sigma, lam1, lam2, eps,
            self.cfg.period, self.seasonal.values,
            self._Lo, self._Do, self._zo, self._taus, self._rp, self._rq, self._ry, self._ru,
            self._stats, self._out, self._meta,
        )
        meta = self._meta
        if meta[_M_BAD] >= 0:
            self.m -= 1
            raise SolverFailure(f"non-positive pivot in iteration {int(meta[_M_BAD])} at t={self.t}")
        shift = int(meta[_M_SHIFT])
        self.last_ops = int(meta[_M_OPS])
        self.ops += self.last_ops
        self.last_searched = bool(meta[_M_SEARCHED])
        self.searches += self.last_searched
        plain = float(self._out[_O_PLAIN_SCORE])
        self.last_plain_score = None if plain < 0 else plain
        self.t += 1
        return shift

    def update(self, y: float) -> DecompPoint:
        """Decompose the next observation in constant time."""
        if not np.isfinite(y):
            raise NonFiniteInput(f"observation at t={self.t} is not finite")
        y = float(y)
        shift = self._step(y)
        out = self._out
        tau, s = float(out[_O_TAU]) + self.level, float(out[_O_S])
        score = float(out[_O_SCORE])
        score_v = None if score < 0 else score
        return DecompPoint.from_value(
            y, tau, s, shift=shift,
            score=score_v, is_anomaly=bool(score_v is not None and score_v > self.cfg.nsigma_n),
        )

    def update_many(self, ys) -> List[DecompPoint]:
        return [self.update(float(y)) for y in ys]

    def evaluate_shift_candidates(self, y: float) -> Tuple[int, DecompPoint, "OneShotSTL"]:
        """Run the phase-shift search for ``y`` on a copy of this engine.

        Returns the selected shift, the winning decomposition and the engine
        holding the committed winner. ``self`` is left untouched.
        """
        if self.cfg.shift_window < 1:
            clone = self.clone()
            pt = clone.update(y)
            return 0, pt, clone
        clone = self.clone()
        # a negative threshold makes every scored point trigger the search
        clone._cfg_args = (clone._cfg_args[0], -1.0) + clone._cfg_args[2:]
        pt = clone.update(y)
        clone._cfg_args = self._cfg_args
        return pt.shift, pt, clone

    # -- inspection ---------------------------------------------------------

    @property
    def t_counter(self) -> int:
        return self.t

    @property
    def nsigma(self) -> NSigmaStats:
        return NSigmaStats.from_array(self._stats)

    @property
    def last_trend(self) -> float:
        return float(self._taus[-1, 1]) + self.level

    @property
    def iterations(self) -> List[IterationState]:
        states = []
        for i in range(self.cfg.max_iters):
            f = OnlineFactorState(self._Lo[i], self._Do[i], self._zo[i], rows_emitted=STEP * self.m)
            states.append(IterationState(f, float(self._taus[i, 1]) + self.level,
                                         float(self._taus[i, 0]) + self.level,
                                         self._rp[i], self._rq[i]))
        return states

    def clone(self) -> "OneShotSTL":
        c = OneShotSTL(
            self.cfg, SeasonalBuffer(self.seasonal.values.copy(), self.seasonal.period), self.t, self.m,
            self._Lo.copy(), self._Do.copy(), self._zo.copy(), self._taus.copy(), self._rp.copy(),
            self._rq.copy(), self._ry.copy(), self._ru.copy(), self._stats.copy(), self.ops, self.level,
        )
        c.searches = self.searches
        return c

    # -- snapshot -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": SNAPSHOT_VERSION,
            "config": asdict(self.cfg),
            "t": self.t,
            "m": self.m,
            "level": self.level,
            "seasonal": self.seasonal.values.tolist(),
            "nsigma": self._stats.tolist(),
            "recent_y": self._ry.tolist(),
            "recent_u": self._ru.tolist(),
            "iterations": [
                {
                    "L": self._Lo[i].tolist(),
                    "D": self._Do[i].tolist(),
                    "b": self._zo[i].tolist(),
                    "tau": self._taus[i].tolist(),
                    "p": self._rp[i].tolist(),
                    "q": self._rq[i].tolist(),
                }
                for i in range(self.cfg.max_iters)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OneShotSTL":
        if d.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {d.get('version')!r}")
        cfg = validate_config(Config(**d["config"]))
        its = d["iterations"]
        if len(its) != cfg.max_iters:
            raise ValueError("snapshot iteration count does not match config")
        seasonal = np.array(d["seasonal"], dtype=float)
        if seasonal.size != cfg.period + cfg.shift_window:
            raise ValueError("snapshot seasonal history does not match period + shift_window")
        return cls(
            cfg, SeasonalBuffer(seasonal, cfg.period), int(d["t"]), int(d["m"]),
            np.array([it["L"] for it in its], dtype=float),
            np.array([it["D"] for it in its], dtype=float),
            np.array([it["b"] for it in its], dtype=float),
            np.array([it["tau"] for it in its], dtype=float),
            np.array([it["p"] for it in its], dtype=float),
            np.array([it["q"] for it in its], dtype=float),
            np.array(d["recent_y"], dtype=float),
            np.array(d["recent_u"], dtype=float),
            np.array(d["nsigma"], dtype=float),
            level=float(d["level"]),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "OneShotSTL":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


DecomposerState = OneShotSTL


def initialize(y_init, cfg: Config) -> OneShotSTL:
    return OneShotSTL.initialize(y_init, cfg)


def update(state: Optional[OneShotSTL], y: float) -> DecompPoint:
    if state is None:
        raise NotInitialized("decomposer has not been initialized")
    return state.update(y)


def evaluate_shift_candidates(state: OneShotSTL, y: float):
    return state.evaluate_shift_candidates(y)
