"""Batch reference solvers.

``joint_stl`` decomposes a whole series at once by iteratively reweighted
least squares and is used to seed the stream. ``modified_joint_stl`` is the
slow, growing-window formulation of the streaming problem: every point
rebuilds and solves the full system from scratch. It shares no state with the
online engine and serves as its exactness oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, List, NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit

from .banded import (
    BETA,
    NEW,
    BandedSymMatrix,
    NonPositivePivot,
    banded_solve,
    sdf_factorize,
)
from .core import Config, DecompPoint, NonFiniteInput, SolverFailure, as_finite_array, validate_config

# Upper bound on n * beta**2 for the banded batch path; larger systems go to SuperLU.
BANDED_WORK_LIMIT = 2e8
# a ridge below this fraction of the largest diagonal entry is lost to round-off
ANCHOR_RATIO = 1e-6


def irls_weight_p(tau_t: float, tau_prev: float, eps: float) -> float:
    return 1.0 / (2.0 * max(abs(tau_t - tau_prev), eps))


def irls_weight_q(tau_t: float, tau_prev: float, tau_prev2: float, eps: float) -> float:
    return 1.0 / (2.0 * max(abs(tau_t - 2.0 * tau_prev + tau_prev2), eps))


@dataclass(frozen=True)
class IrlsWeights:
    """First- and second-difference weights.

    In the batch system ``p`` has ``N - 1`` entries (one per first difference)
    and ``q`` has ``N - 2``. In the online system both have one entry per
    point; entries for the first one (``p``) or two (``q``) points are unused.
    """

    p: np.ndarray
    q: np.ndarray

    @classmethod
    def ones_batch(cls, n: int) -> "IrlsWeights":
        return cls(np.ones(n - 1), np.ones(n - 2))

    @classmethod
    def from_trend(cls, tau: np.ndarray, eps: float) -> "IrlsWeights":
        d1 = np.abs(np.diff(tau))
        d2 = np.abs(np.diff(tau, 2))
        return cls(0.5 / np.maximum(d1, eps), 0.5 / np.maximum(d2, eps))


@dataclass(frozen=True)
class BatchSystem:
    """Normal equations of the batch problem in ``x = [tau; s]`` ordering."""

    A: sp.csr_matrix
    b: np.ndarray


@dataclass(frozen=True)
class OnlineSystem:
    """Normal equations of the windowed problem, ordered ``tau_1, s_1, tau_2, s_2, ...``."""

    A: BandedSymMatrix
    b: np.ndarray


class Decomposition(NamedTuple):
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray


# ---------------------------------------------------------------------------
# batch system


def _lower_coo(n2: int, rows, cols, vals) -> sp.csr_matrix:
    """Sum contributions into the lower triangle and mirror it."""
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    lo_r = np.maximum(rows, cols)
    lo_c = np.minimum(rows, cols)
    L = sp.coo_matrix((vals, (lo_r, lo_c)), shape=(n2, n2)).tocsr()
    L.sum_duplicates()
    strict = sp.tril(L, k=-1)
    return (L + strict.T).tocsr()


def _quad_terms(idx: Sequence[np.ndarray], coef: Sequence[float], w: np.ndarray):
    """Lower-triangle contributions of ``sum_k w_k (sum_a coef_a x[idx_a[k]])**2``."""
    rows, cols, vals = [], [], []
    for a in range(len(idx)):
        for c in range(a + 1):
            rows.append(idx[a])
            cols.append(idx[c])
            vals.append(w * (coef[a] * coef[c]))
    return rows, cols, vals


def build_batch_system(
    y: np.ndarray,
    period: int,
    weights: IrlsWeights,
    lambda1: float,
    lambda2: float,
    ridge: float = 0.0,
) -> BatchSystem:
    """Assemble ``A x = b`` for the batch problem with fixed weights.

    ``A`` collects the fit term, the period-to-period seasonal smoothness, the
    two weighted trend penalties and ``ridge * sum(s**2)``.
    """
    y = as_finite_array(y)
    n = y.size
    T = int(period)
    if not n > T >= 2:
        raise ValueError("need N > T >= 2")
    tau = np.arange(n)
    s = n + np.arange(n)
    parts: list = [[], [], []]

    def add(r, c, v):
        parts[0].extend(r)
        parts[1].extend(c)
        parts[2].extend(v)

    ones = np.ones(n)
    add(*_quad_terms([tau, s], [1.0, 1.0], ones))
    add(*_quad_terms([s[T:], s[:-T]], [1.0, -1.0], np.ones(n - T)))
    if lambda1:
        add(*_quad_terms([tau[1:], tau[:-1]], [1.0, -1.0], lambda1 * np.asarray(weights.p, float)))
    if lambda2:
        add(*_quad_terms([tau[2:], tau[1:-1], tau[:-2]], [1.0, -2.0, 1.0], lambda2 * np.asarray(weights.q, float)))
    if ridge:
        add([s], [s], [np.full(n, float(ridge))])
    A = _lower_coo(2 * n, *parts)
    b = np.concatenate([y, y])
    return BatchSystem(A, b)


def batch_residual(y: np.ndarray, period: int, weights: IrlsWeights, lambda1: float, lambda2: float,
                   x: np.ndarray) -> np.ndarray:
    """``b - A x`` for the ridge-free batch system, assembled term by term.

    Differences of ``tau`` are taken before the weights are applied, so each
    weighted term stays bounded even where the weights are floored.
    """
    y = np.asarray(y, float)
    n = y.size
    T = int(period)
    tau, s = x[:n], x[n:]
    e = y - tau - s
    rt = e.copy()
    rs = e.copy()
    if lambda1:
        v = lambda1 * (np.asarray(weights.p, float) * np.diff(tau))
        rt[1:] -= v
        rt[:-1] += v
    if lambda2:
        v = lambda2 * (np.asarray(weights.q, float) * np.diff(tau, 2))
        rt[2:] -= v
        rt[1:-1] += 2.0 * v
        rt[:-2] -= v
    v = s[T:] - s[:-T]
    rs[T:] -= v
    rs[:-T] += v
    return np.concatenate([rt, rs])


def _interleave_perm(n: int) -> np.ndarray:
    perm = np.empty(2 * n, dtype=np.int64)
    perm[0::2] = np.arange(n)
    perm[1::2] = n + np.arange(n)
    return perm


def _band_from_sparse(A: sp.csr_matrix, beta: int) -> BandedSymMatrix:
    lower = sp.tril(A).tocoo()
    d = lower.row - lower.col
    if d.size and d.max() > beta:
        raise ValueError("matrix exceeds the requested bandwidth")
    band = np.zeros((A.shape[0], beta + 1))
    np.add.at(band, (lower.row, d), lower.data)
    return BandedSymMatrix(band)


def _superlu(Ap: sp.csr_matrix, bp: np.ndarray, pivot: float) -> np.ndarray:
    try:
        lu = spla.splu(
            Ap.tocsc(),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=pivot,
            options={"SymmetricMode": pivot == 0.0},
        )
    except RuntimeError as exc:
        raise SolverFailure(str(exc)) from exc
    return lu.solve(bp)


def _solve_interleaved(A: sp.csr_matrix, b: np.ndarray, period: int) -> np.ndarray:
    n2 = A.shape[0]
    perm = _interleave_perm(n2 // 2)
    Ap = A[perm][:, perm].tocsr()
    bp = b[perm]
    beta = max(2 * int(period), BETA)
    if n2 * beta * beta <= BANDED_WORK_LIMIT:
        try:
            xp = banded_solve(sdf_factorize(_band_from_sparse(Ap, beta)), bp)
        except NonPositivePivot:
            # floored weights can push the system past what LDL^T resolves; pivoting LU still copes
            xp = _superlu(Ap, bp, 1.0)
    else:
        xp = _superlu(Ap, bp, 0.0)
    if not np.all(np.isfinite(xp)):
        raise SolverFailure("batch solve produced non-finite values")
    x = np.empty_like(xp)
    x[perm] = xp
    return x


def solve_batch_system(system: BatchSystem, period: int, ridge: float = 0.0,
                       x0: Optional[np.ndarray] = None, residual: Optional[np.ndarray] = None) -> np.ndarray:
    """Solve the batch system in interleaved order.

    Interleaving ``tau`` and ``s`` gives half-bandwidth ``max(2T, 4)``. Small
    bands go through the banded LDL^T solver; otherwise SuperLU is used.

    Moving ``c`` from every ``s`` to every ``tau`` leaves the objective
    unchanged apart from the ``ridge`` term, whose minimizer along that
    direction has ``mean(s) == 0``. Floored reweighting factors put entries
    near ``1e10`` on the diagonal, and a small ridge then drowns in round-off.
    In that case the ridge is swapped for a strong anchor holding ``s[0]`` at
    its value in ``x0`` (or zero): it leaves the set of minimizers unchanged
    and only fixes which one is returned. Either way the result is projected
    onto ``mean(s) == 0``.

    With a starting point ``x0`` only the correction ``x - x0`` is solved for,
    so round-off scales with the size of the step rather than the solution.
    That keeps near-flat inputs, where the weights are floored, accurate.
    ``residual`` is the ridge-free ``b - A x0`` when the caller can form it
    more accurately than a product with ``A``.
    """
    n = system.A.shape[0] // 2
    A = system.A
    scale = float(A.diagonal().max())
    anchored = ridge <= ANCHOR_RATIO * scale
    if anchored:
        diag = np.zeros(2 * n)
        diag[n:] = -float(ridge)
        A = (A + sp.diags(diag)).tocsr()
        anchor = np.zeros(2 * n)
        anchor[n] = scale
        lhs = (A + sp.diags(anchor)).tocsr()
    else:
        lhs = A
    if x0 is None:
        x = _solve_interleaved(lhs, system.b, period)
    else:
        x0 = np.asarray(x0, float)
        if residual is None:
            rhs = system.b - A @ x0
        else:
            rhs = np.array(residual, float)
            if not anchored:
                rhs[n:] -= ridge * x0[n:]
        x = x0 + _solve_interleaved(lhs, rhs, period)
        if not np.all(np.isfinite(x)):
            raise SolverFailure("non-finite solution")
    c = float(np.mean(x[n:]))
    x[:n] += c
    x[n:] -= c
    return x


def joint_stl_iterates(
    y: np.ndarray,
    period: int,
    lambda1: float,
    lambda2: float,
    max_iters: int = 8,
    ridge: Optional[float] = None,
    weight_floor: float = 1e-10,
    tol: Optional[float] = None,
) -> Iterator[Decomposition]:
    """Yield the decomposition after every reweighting round."""
    y = as_finite_array(y)
    n = y.size
    T = int(period)
    if n < 2 * T:
        raise ValueError("joint_stl needs at least two periods of data")
    ridge = 1e-8 * n if ridge is None else ridge
    w = IrlsWeights.ones_batch(n)
    prev = prev_x = None
    for _ in range(max_iters):
        system = build_batch_system(y, T, w, lambda1, lambda2, ridge)
        if prev_x is None:
            x = solve_batch_system(system, T, ridge)
        else:
            res = batch_residual(y, T, w, lambda1, lambda2, prev_x)
            x = solve_batch_system(system, T, ridge, prev_x, res)
        tau, s = x[:n], x[n:]
        yield Decomposition(tau, s, y - tau - s)
        w = IrlsWeights.from_trend(tau, weight_floor)
        if tol is not None and prev is not None:
            if np.linalg.norm(x - prev) <= tol * max(np.linalg.norm(x), 1e-300):
                return
        prev = prev_x = x


def joint_stl(
    y: np.ndarray,
    period: int,
    lambda1: float,
    lambda2: float,
    max_iters: int = 8,
    ridge: Optional[float] = None,
    weight_floor: float = 1e-10,
    tol: Optional[float] = None,
) -> Decomposition:
    """Batch trend/seasonal/residual decomposition with l1 trend penalties."""
    last = None
    for last in joint_stl_iterates(y, period, lambda1, lambda2, max_iters, ridge, weight_floor, tol):
        pass
    assert last is not None
    return last


def huber_abs(d: np.ndarray, eps: float) -> np.ndarray:
    """``|d|`` smoothed below ``eps``; the function majorized by the reweighted surrogate."""
    a = np.abs(d)
    return np.where(a >= eps, a, d * d / (2 * eps) + eps / 2)


def batch_objective(y, tau, s, period, lambda1, lambda2, weight_floor=1e-10, ridge=0.0) -> float:
    y, tau, s = (np.asarray(a, float) for a in (y, tau, s))
    T = int(period)
    val = np.sum((tau + s - y) ** 2) + np.sum((s[T:] - s[:-T]) ** 2)
    val += lambda1 * np.sum(huber_abs(np.diff(tau), weight_floor))
    val += lambda2 * np.sum(huber_abs(np.diff(tau, 2), weight_floor))
    val += ridge * np.sum(s * s)
    return float(val)


def auxiliary_objective(y, tau, s, period, lambda1, lambda2, weights: IrlsWeights, ridge=0.0) -> float:
    """Objective with the l1 terms replaced by ``p d**2 + 1/(4p)``."""
    y, tau, s = (np.asarray(a, float) for a in (y, tau, s))
    T = int(period)
    p, q = np.asarray(weights.p), np.asarray(weights.q)
    val = np.sum((tau + s - y) ** 2) + np.sum((s[T:] - s[:-T]) ** 2)
    val += lambda1 * np.sum(p * np.diff(tau) ** 2 + 0.25 / p)
    val += lambda2 * np.sum(q * np.diff(tau, 2) ** 2 + 0.25 / q)
    val += ridge * np.sum(s * s)
    return float(val)


# ---------------------------------------------------------------------------
# windowed (online) system


def build_online_system(
    y: np.ndarray,
    u: np.ndarray,
    weights: IrlsWeights,
    lambda1: float,
    lambda2: float,
) -> OnlineSystem:
    """Assemble the growing-window system.

    ``u[j]`` is the seasonal buffer value the ``j``-th point is anchored to
    (the period-tiled buffer when no shift is applied). ``weights.p[j]`` and
    ``weights.q[j]`` belong to the difference that ends at point ``j``.
    """
    y = np.asarray(y, float)
    u = np.asarray(u, float)
    m = y.size
    p = np.asarray(weights.p, float)
    q = np.asarray(weights.q, float)
    if u.size != m or p.size < m or q.size < m:
        raise ValueError("y, u and weights must cover the same points")
    band = np.zeros((2 * m, BETA + 1))
    ti = 2 * np.arange(m)
    band[ti, 0] += 1.0
    band[ti + 1, 0] += 2.0
    band[ti + 1, 1] += 1.0
    if m >= 2:
        w = lambda1 * p[1:m]
        j = ti[1:]
        np.add.at(band, (j, 0), w)
        np.add.at(band, (j - 2, 0), w)
        np.add.at(band, (j, 2), -w)
    if m >= 3:
        w = lambda2 * q[2:m]
        j = ti[2:]
        np.add.at(band, (j, 0), w)
        np.add.at(band, (j - 2, 0), 4.0 * w)
        np.add.at(band, (j - 4, 0), w)
        np.add.at(band, (j, 2), -2.0 * w)
        np.add.at(band, (j - 2, 2), -2.0 * w)
        np.add.at(band, (j, 4), w)
    b = np.empty(2 * m)
    b[0::2] = y
    b[1::2] = y + u
    return OnlineSystem(BandedSymMatrix(band), b)


@njit(cache=True)
def fill_tail_block(m, p3, q3, y3, u3, lambda1, lambda2, A, b):
    """Write the bottom-right block of the ``m``-point window system into ``A``, ``b``.

    Local rows are ``tau, s`` of points ``m-3, m-2, m-1``. Points before the
    start of the window are identity rows with zero right-hand side.
    """
    for r in range(NEW):
        b[r] = 0.0
        for c in range(NEW):
            A[r, c] = 0.0
    for k in range(3):
        j = m - 3 + k
        t = 2 * k
        if j < 0:
            A[t, t] = 1.0
            A[t + 1, t + 1] = 1.0
            continue
        A[t, t] += 1.0
        A[t + 1, t + 1] += 2.0
        A[t, t + 1] += 1.0
        A[t + 1, t] += 1.0
        b[t] = y3[k]
        b[t + 1] = y3[k] + u3[k]
        if j >= 1:
            w = lambda1 * p3[k]
            A[t, t] += w
            if k >= 1:
                A[t - 2, t - 2] += w
                A[t, t - 2] -= w
                A[t - 2, t] -= w
        if j >= 2:
            w = lambda2 * q3[k]
            # coefficients 1, -2, 1 on points j, j-1, j-2
            A[t, t] += w
            if k >= 1:
                A[t - 2, t - 2] += 4.0 * w
                A[t, t - 2] -= 2.0 * w
                A[t - 2, t] -= 2.0 * w
            if k >= 2:
                A[t - 4, t - 4] += w
                A[t, t - 4] += w
                A[t - 4, t] += w
                A[t - 2, t - 4] -= 2.0 * w
                A[t - 4, t - 2] -= 2.0 * w


def tail_block(m, p3, q3, y3, u3, lambda1, lambda2):
    """Return ``(A_star, b_star)`` for appending point ``m - 1`` to the window.

    ``p3``, ``q3``, ``y3``, ``u3`` hold the values of the last three points
    (oldest first).
    """
    A = np.zeros((NEW, NEW))
    b = np.zeros(NEW)
    fill_tail_block(
        int(m),
        np.asarray(p3, float),
        np.asarray(q3, float),
        np.asarray(y3, float),
        np.asarray(u3, float),
        float(lambda1),
        float(lambda2),
        A,
        b,
    )
    return A, b


def init_seasonal_buffer(seasonal: np.ndarray, period: int) -> np.ndarray:
    """One period of seasonal values laid out so that ``v[t % T] == s[t]``.

    Uses the last ``T`` values ``s[t0-T] .. s[t0-1]``.
    """
    t0 = seasonal.size
    v = np.empty(period)
    idx = np.arange(t0 - period, t0)
    v[idx % period] = seasonal[idx]
    return v


def modified_joint_stl(y_init: np.ndarray, stream: np.ndarray, cfg: Config) -> List[DecompPoint]:
    """Slow reference for the streaming decomposition (no shift search).

    Every point and every iteration builds the whole window system and solves
    it with a fresh factorization, so the cost grows with the stream length.
    """
    return list(iter_modified_joint_stl(y_init, stream, cfg))


def iter_modified_joint_stl(y_init: np.ndarray, stream, cfg: Config) -> Iterator[DecompPoint]:
    """Lazy form of :func:`modified_joint_stl`; yields one point per stream value."""
    cfg = validate_config(cfg)
    y_init = as_finite_array(y_init)
    T, I, eps = cfg.period, cfg.max_iters, cfg.weight_floor
    t0 = y_init.size
    # same working level as the streaming engine
    level = float(np.median(y_init))
    init = joint_stl(y_init - level, T, cfg.lambda1, cfg.lambda2, I, cfg.ridge_for(t0), eps, cfg.batch_tol)
    v = init_seasonal_buffer(init.seasonal, T)
    k = min(cfg.warm_len, t0)

    ys: List[float] = []
    us: List[float] = []
    p = [[] for _ in range(I)]
    q = [[] for _ in range(I)]
    seed1 = init.trend[t0 - k - 1] if t0 - k - 1 >= 0 else init.trend[0]
    seed2 = init.trend[t0 - k - 2] if t0 - k - 2 >= 0 else seed1
    taus = [[seed2, seed1] for _ in range(I)]
    def values():
        yield from y_init[t0 - k:]
        for y in stream:
            if not np.isfinite(y):
                raise NonFiniteInput("stream value is not finite")
            yield y

    for n, y in enumerate(values()):
        t = t0 - k + n
        ys.append(float(y) - level)
        us.append(float(v[t % T]))
        p[0].append(1.0)
        q[0].append(1.0)
        for i in range(I):
            system = build_online_system(np.array(ys), np.array(us), IrlsWeights(np.array(p[i]), np.array(q[i])),
                                         cfg.lambda1, cfg.lambda2)
            try:
                x = banded_solve(sdf_factorize(system.A), system.b)
            except NonPositivePivot as exc:
                raise SolverFailure(str(exc)) from exc
            tau, s = x[-2], x[-1]
            hist = taus[i]
            if i + 1 < I:
                p[i + 1].append(irls_weight_p(tau, hist[-1], eps))
                q[i + 1].append(irls_weight_q(tau, hist[-1], hist[-2], eps))
            hist.append(tau)
        if t >= t0:
            v[t % T] = s
            yield DecompPoint.from_value(float(y), float(tau) + level, float(s))
