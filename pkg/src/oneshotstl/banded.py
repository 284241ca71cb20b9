"""Banded symmetric LDL^T (Doolittle) factorization and its online extension.

Band storage is row-major packed diagonals: ``band[i, d] == A[i, i - d]`` for
``0 <= d <= beta``. Only the lower triangle is stored.

The online kernels work on a fixed window of ``2 * beta + 2`` rows. Each time
point adds two unknowns (trend and seasonal), so every call extends the
factorization by two rows and recomputes the ``beta`` rows above them whose
matrix entries changed. The carried state is the block of ``L`` rows that the
next call still reads, together with the matching pivots and forward
substituted right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

BETA = 4
STEP = 2
WIN = 2 * BETA + STEP
CARRY = WIN - STEP
NEW = WIN - BETA


class NonPositivePivot(ArithmeticError):
    def __init__(self, k: int, value: float = float("nan")):
        super().__init__(f"non-positive pivot at row {k} (D={value!r})")
        self.k = k
        self.value = value


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class BandedSymMatrix:
    band: np.ndarray

    @property
    def dim(self) -> int:
        return self.band.shape[0]

    @property
    def half_bandwidth(self) -> int:
        return self.band.shape[1] - 1

    @classmethod
    def from_dense(cls, A: np.ndarray, beta: int) -> "BandedSymMatrix":
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch("matrix must be square")
        if not np.array_equal(A, A.T):
            raise ValueError("matrix is not symmetric")
        i, j = np.indices(A.shape)
        if np.any(A[np.abs(i - j) > beta] != 0):
            raise ValueError(f"matrix has entries outside half-bandwidth {beta}")
        band = np.zeros((n, beta + 1))
        for d in range(beta + 1):
            band[d:, d] = np.diagonal(A, -d)
        return cls(band)

    def to_dense(self) -> np.ndarray:
        n, w = self.band.shape
        A = np.zeros((n, n))
        for d in range(w):
            idx = np.arange(d, n)
            A[idx, idx - d] = self.band[d:, d]
            A[idx - d, idx] = self.band[d:, d]
        return A

    def measured_bandwidth(self) -> int:
        nz = np.flatnonzero(np.any(self.band != 0, axis=0))
        return int(nz[-1]) if nz.size else 0

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return _band_matvec(self.band, np.asarray(x, dtype=float))


@dataclass(frozen=True)
class LDLFactors:
    """Unit lower-triangular ``L`` in band storage and the pivot vector ``D``."""

    L: np.ndarray
    D: np.ndarray

    @property
    def dim(self) -> int:
        return self.D.size

    def dense_L(self) -> np.ndarray:
        return _lower_from_band(self.L)

    def reconstruct(self) -> np.ndarray:
        Ld = _lower_from_band(self.L)
        return (Ld * self.D) @ Ld.T


def _lower_from_band(band: np.ndarray) -> np.ndarray:
    n, w = band.shape
    L = np.zeros((n, n))
    for d in range(w):
        idx = np.arange(d, n)
        L[idx, idx - d] = band[d:, d]
    return L


@njit(cache=True)
def _band_matvec(band, x):
    n, w = band.shape
    out = np.zeros(n)
    for i in range(n):
        out[i] += band[i, 0] * x[i]
        for d in range(1, min(w, i + 1)):
            a = band[i, d]
            out[i] += a * x[i - d]
            out[i - d] += a * x[i]
    return out


@njit(cache=True)
def _ldl_band(Ab, Lb, D):
    n, w = Ab.shape
    beta = w - 1
    for k in range(n):
        akk = Ab[k, 0]
        a = akk
        for i in range(max(0, k - beta), k):
            l = Lb[k, k - i]
            a -= D[i] * l * l
        if not a > 0.0:
            D[k] = a
            return k
        D[k] = a
        Lb[k, 0] = 1.0
        for j in range(k + 1, min(n, k + beta + 1)):
            a = Ab[j, j - k]
            for i in range(max(0, j - beta), k):
                a -= Lb[j, j - i] * D[i] * Lb[k, k - i]
            Lb[j, j - k] = a / D[k]
    return -1


@njit(cache=True)
def _forward_band(Lb, b):
    n, w = Lb.shape
    z = b.copy()
    for k in range(n):
        acc = z[k]
        for i in range(max(0, k - w + 1), k):
            acc -= Lb[k, k - i] * z[i]
        z[k] = acc
    return z


@njit(cache=True)
def _backward_band(Lb, D, z):
    n, w = Lb.shape
    x = z / D
    for k in range(n - 1, -1, -1):
        acc = x[k]
        for j in range(k + 1, min(n, k + w)):
            acc -= Lb[j, j - k] * x[j]
        x[k] = acc
    return x


def sdf_factorize(A: BandedSymMatrix) -> LDLFactors:
    """Symmetric Doolittle factorization ``A = L D L^T`` restricted to the band.

    Raises :class:`NonPositivePivot` when a pivot falls below
    ``1e-12 * max(1, |A[k, k]|)``.
    """
    Ab = np.ascontiguousarray(A.band, dtype=float)
    Lb = np.zeros_like(Ab)
    D = np.zeros(Ab.shape[0])
    k = _ldl_band(Ab, Lb, D)
    if k >= 0:
        raise NonPositivePivot(int(k), float(D[k]))
    return LDLFactors(Lb, D)


def forward_substitute(f: LDLFactors, b: np.ndarray) -> np.ndarray:
    """Solve ``L z = b``."""
    b = np.asarray(b, dtype=float)
    if b.shape != (f.dim,):
        raise DimensionMismatch(f"rhs has shape {b.shape}, expected ({f.dim},)")
    return _forward_band(f.L, b)


def banded_solve(f: LDLFactors, b: np.ndarray) -> np.ndarray:
    """Solve ``L D L^T x = b`` by forward substitution, scaling and back substitution."""
    z = forward_substitute(f, b)
    return _backward_band(f.L, f.D, z)


# ---------------------------------------------------------------------------
# online extension


@dataclass
class OnlineFactorState:
    """Trailing blocks of an LDL^T factorization that grows two rows per call.

    ``L`` holds rows ``n-8 .. n-1`` and columns ``n-8 .. n-5`` of the unit
    lower factor of the current ``n``-row system, ``D`` the pivots of columns
    ``n-8 .. n-5`` and ``b`` the forward substituted right-hand side on the
    same rows. Rows before the start of the system behave as identity rows
    with zero right-hand side.
    """

    L: np.ndarray = field(default_factory=lambda: _virtual_L())
    D: np.ndarray = field(default_factory=lambda: np.ones(BETA))
    b: np.ndarray = field(default_factory=lambda: np.zeros(BETA))
    rows_emitted: int = 0
    ops: int = 0

    def copy(self) -> "OnlineFactorState":
        return OnlineFactorState(self.L.copy(), self.D.copy(), self.b.copy(), self.rows_emitted, self.ops)

    def same_as(self, other: "OnlineFactorState") -> bool:
        return (
            np.array_equal(self.L, other.L)
            and np.array_equal(self.D, other.D)
            and np.array_equal(self.b, other.b)
            and self.rows_emitted == other.rows_emitted
        )


def _virtual_L() -> np.ndarray:
    L = np.zeros((CARRY, BETA))
    for c in range(BETA):
        L[c, c] = 1.0
    return L


def clone_factor_state(state: OnlineFactorState) -> OnlineFactorState:
    return state.copy()


def factor_state_from_prefix(f: LDLFactors, z: np.ndarray) -> OnlineFactorState:
    """Carried state after a full factorization ``f`` with forward substituted ``z``.

    Lets a stream continue a system that was factorized in batch.
    """
    n = f.dim
    state = OnlineFactorState(rows_emitted=n)
    Ld = f.dense_L()
    base = n - CARRY
    for r in range(CARRY):
        gr = base + r
        if gr < 0:
            continue
        for c in range(BETA):
            gc = base + c
            if gc >= 0:
                state.L[r, c] = Ld[gr, gc]
            elif gc == gr:
                state.L[r, c] = 1.0
            else:
                state.L[r, c] = 0.0
    for c in range(BETA):
        gc = base + c
        if gc >= 0:
            state.D[c] = f.D[gc]
            state.b[c] = z[gc]
    return state


@njit(cache=True)
def _extend_factor(Lo, Do, A_star, Lw, Dw):
    """Extend the carried factorization by the rows of ``A_star``.

    Returns ``(bad_row, ops)``; ``bad_row`` is -1 on success.
    """
    ops = 0
    for r in range(WIN):
        for c in range(WIN):
            Lw[r, c] = 0.0
        Dw[r] = 0.0
    for r in range(CARRY):
        for c in range(BETA):
            Lw[r, c] = Lo[r, c]
    for c in range(BETA):
        Dw[c] = Do[c]
    for k in range(BETA, WIN):
        akk = A_star[k - BETA, k - BETA]
        a = akk
        for i in range(k - BETA, k):
            l = Lw[k, i]
            a -= Dw[i] * l * l
            ops += 3
        Dw[k] = a
        if not a > 0.0:
            return k, ops
        Lw[k, k] = 1.0
        for j in range(k + 1, min(WIN, k + BETA + 1)):
            a = A_star[j - BETA, k - BETA]
            for i in range(j - BETA, k):
                a -= Lw[j, i] * Dw[i] * Lw[k, i]
                ops += 4
            Lw[j, k] = a / Dw[k]
            ops += 1
    return -1, ops


@njit(cache=True)
def _extend_solve(Lw, Dw, zo, b_star, zw):
    """Forward substitution over the new rows and the truncated back substitution.

    Returns the last two solution entries and the operation count.
    """
    ops = 0
    for c in range(BETA):
        zw[c] = zo[c]
    for k in range(BETA, WIN):
        acc = b_star[k - BETA]
        for i in range(k - BETA, k):
            acc -= Lw[k, i] * zw[i]
            ops += 2
        zw[k] = acc
    x_last = zw[WIN - 1] / Dw[WIN - 1]
    x_prev = zw[WIN - 2] / Dw[WIN - 2] - Lw[WIN - 1, WIN - 2] * x_last
    ops += 4
    return x_prev, x_last, ops


@njit(cache=True)
def _commit(Lo, Do, zo, Lw, Dw, zw):
    for r in range(CARRY):
        for c in range(BETA):
            Lo[r, c] = Lw[r + STEP, c + STEP]
    for c in range(BETA):
        Do[c] = Dw[c + STEP]
        zo[c] = zw[c + STEP]


def online_doolittle_step(state: OnlineFactorState, A_star: np.ndarray, b_star: np.ndarray):
    """Append one time point (two unknowns) and return ``(tau_t, s_t, state)``.

    ``A_star`` is the full bottom-right ``6 x 6`` block of the grown system and
    ``b_star`` the matching right-hand side entries. ``state`` is updated in
    place.
    """
    A_star = np.ascontiguousarray(A_star, dtype=float)
    b_star = np.ascontiguousarray(b_star, dtype=float)
    if A_star.shape != (NEW, NEW) or b_star.shape != (NEW,):
        raise DimensionMismatch("A_star must be 6x6 and b_star length 6")
    Lw = np.empty((WIN, WIN))
    Dw = np.empty(WIN)
    zw = np.empty(WIN)
    bad, ops_f = _extend_factor(state.L, state.D, A_star, Lw, Dw)
    if bad >= 0:
        raise NonPositivePivot(state.rows_emitted + bad - CARRY, float(Dw[bad]))
    tau, s, ops_s = _extend_solve(Lw, Dw, state.b, b_star, zw)
    _commit(state.L, state.D, state.b, Lw, Dw, zw)
    state.rows_emitted += STEP
    state.ops += ops_f + ops_s
    return tau, s, state
