"""Acceptance checks, one per criterion, each at its stated tolerance.

Every check returns ``(passed, detail)``. Under pytest the outcome is recorded
and a one-line summary per criterion is printed at the end of the session;
``python3 tests/test_acceptance.py`` runs them directly.
"""

import collections
import sys
import time

import numpy as np
import pytest

from oneshotstl import Config, NSigmaStats, forecast_horizon, forecast_step, initialize, modified_joint_stl, nsigma_update
from oneshotstl.banded import BandedSymMatrix, banded_solve, sdf_factorize
from oneshotstl.batch import batch_objective, joint_stl, joint_stl_iterates
from oneshotstl.bench import bench_period, run_bench

RESULTS = {}

NAMES = {
    1: "oracle equivalence",
    2: "factorization property",
    3: "IRLS descent",
    4: "constant per-point cost",
    5: "trend jump recovery",
    6: "phase shift recovery",
    7: "n-sigma exactness",
    8: "forecast exactness",
    9: "throughput floor",
}


def _random_banded_spd(m, beta, rng):
    G = np.zeros((m, m))
    for i in range(m):
        G[i, i : min(m, i + beta + 1)] = rng.standard_normal(min(m, i + beta + 1) - i)
    return G.T @ G + np.eye(m)


# -- 1 ---------------------------------------------------------------------------


def check_oracle_equivalence():
    worst = 0.0
    streams = 0
    start = time.perf_counter()
    for T in (20, 50, 97):
        for iters in (1, 8):
            for seed in range(2):
                rng = np.random.default_rng(1000 * T + 10 * iters + seed)
                n0, n = 4 * T, 2000
                t = np.arange(n0 + n)
                y = (rng.uniform(-0.02, 0.02) * t + rng.uniform(0.5, 2) * np.sin(2 * np.pi * t / T + rng.uniform(0, 6))
                     + 0.1 * rng.standard_normal(t.size))
                cfg = Config(period=T, shift_window=0, max_iters=iters)
                ref = modified_joint_stl(y[:n0], y[n0:], cfg)
                got = initialize(y[:n0], cfg).update_many(y[n0:])
                for a, b in zip(ref, got):
                    worst = max(worst, abs(a.trend - b.trend), abs(a.seasonal - b.seasonal),
                                abs(a.residual - b.residual))
                streams += 1
    secs = time.perf_counter() - start
    return worst <= 1e-6 and streams >= 10, f"{streams} streams, max |diff| {worst:.2e} (<= 1e-6), {secs:.0f} s"


# -- 2 ---------------------------------------------------------------------------


def check_factorization():
    rng = np.random.default_rng(2)
    worst_rec = worst_solve = 0.0
    for _ in range(100):
        m = int(rng.integers(5, 201))
        A = _random_banded_spd(m, 4, rng)
        f = sdf_factorize(BandedSymMatrix.from_dense(A, 4))
        norm = np.abs(A).sum(axis=1).max()
        worst_rec = max(worst_rec, np.abs(f.reconstruct() - A).sum(axis=1).max() / norm)
        b = rng.standard_normal(m)
        ref = np.linalg.solve(A, b)
        worst_solve = max(worst_solve, np.abs(banded_solve(f, b) - ref).max() / np.abs(ref).max())
    ok = worst_rec <= 1e-9 and worst_solve <= 1e-8
    return ok, f"100 matrices, reconstruction {worst_rec:.1e} (<= 1e-9), solve {worst_solve:.1e} (<= 1e-8)"


# -- 3 ---------------------------------------------------------------------------


def check_irls_descent():
    rng = np.random.default_rng(3)
    worst = -np.inf
    for n, T, kind in ((300, 25, "jump"), (400, 40, "ramp"), (360, 30, "spikes")):
        t = np.arange(n)
        base = np.sin(2 * np.pi * t / T) + 0.1 * rng.standard_normal(n)
        if kind == "jump":
            y = base + np.where(t > n // 2, 1.0, 0.0)
        elif kind == "ramp":
            y = base + 0.01 * t
        else:
            y = base + np.where(rng.random(n) < 0.02, 3.0, 0.0)
        lam = 5.0
        ridge = 1e-8 * n
        vals = [batch_objective(y, d.trend, d.seasonal, T, lam, lam, 1e-10, ridge)
                for d in joint_stl_iterates(y, T, lam, lam, 8, ridge)]
        worst = max(worst, max(b - a for a, b in zip(vals, vals[1:])))
    return worst <= 1e-9, f"3 series, largest per-step increase {worst:.2e} (<= 1e-9)"


# -- 4 ---------------------------------------------------------------------------


def check_constant_cost():
    periods = (100, 200, 400, 800, 1600, 3200, 6400, 12800)
    report = run_bench(periods, points=200_000)
    lo, hi = report.row(100).mean_us, report.row(12800).mean_us
    ops = {r.ops_per_point for r in report.rows}
    ok = hi <= 2 * lo and len(ops) == 1
    return ok, (f"mean {lo:.1f} us at T=100, {hi:.1f} us at T=12800 (ratio {hi / lo:.2f} <= 2), "
                f"ops per point {sorted(ops)}")


# -- 5 ---------------------------------------------------------------------------

SYN_LAMBDA = 10.0


def syn1(seed):
    """Step of 1.0 in a flat trend, unit sinusoid with T=500, noise 0.1."""
    rng = np.random.default_rng(100 + seed)
    T = 500
    t = np.arange(10 * T)
    trend = np.where(t >= 7 * T + 123, 1.0, 0.0)
    return T, trend + np.sin(2 * np.pi * t / T) + 0.1 * rng.standard_normal(t.size), trend


def check_trend_jump():
    rows = []
    for seed in range(3):
        T, y, trend = syn1(seed)
        t0 = 4 * T
        pts = initialize(y[:t0], Config.with_lambda(T, SYN_LAMBDA, shift_window=20)).update_many(y[t0:])
        online = np.abs(np.array([p.trend for p in pts]) - trend[t0:])[T:].mean()
        batch = np.abs(joint_stl(y, T, SYN_LAMBDA, SYN_LAMBDA).trend - trend)[t0 + T :].mean()
        rows.append((online, batch))
    ok = all(o <= 0.05 and o <= 2 * b for o, b in rows)
    text = ", ".join(f"{o:.4f} vs batch {b:.4f}" for o, b in rows)
    return ok, f"online trend MAE (<= 0.05 and <= 2x batch): {text}"


# -- 6 ---------------------------------------------------------------------------


def syn2(seed):
    """Unit sinusoid with T=250 whose phase jumps 10 samples ahead at 8T; noise 0.01."""
    rng = np.random.default_rng(200 + seed)
    T = 250
    t = np.arange(12 * T)
    t_star = 8 * T
    return T, t_star, np.sin(2 * np.pi * np.where(t >= t_star, t + 10, t) / T) + 0.01 * rng.standard_normal(t.size)


def _shift_run(y, T, t_star, H):
    t0 = 4 * T
    pts = initialize(y[:t0], Config.with_lambda(T, SYN_LAMBDA, shift_window=H)).update_many(y[t0:])
    r = np.abs([p.residual for p in pts])
    k = t_star - t0
    shifts = [p.shift for p in pts[k : k + T] if p.shift]
    mode = collections.Counter(shifts).most_common(1)[0][0] if shifts else 0
    return r[k : k + T].mean() / r[k - T : k].mean(), mode


def check_phase_shift():
    rows = []
    for seed in range(3):
        T, t_star, y = syn2(seed)
        ratio, mode = _shift_run(y, T, t_star, 20)
        control, _ = _shift_run(y, T, t_star, 0)
        rows.append((mode, ratio, control))
    ok = all(m == 10 and r <= 3 and c > 3 for m, r, c in rows)
    text = ", ".join(f"shift {m} ratio {r:.2f} control {c:.1f}" for m, r, c in rows)
    return ok, f"H=20 ratio <= 3 with shift 10, H=0 ratio > 3: {text}"


# -- 7 ---------------------------------------------------------------------------


def check_nsigma():
    examples = []
    flag, score, stats = nsigma_update(NSigmaStats(), 3.0, 5)
    examples.append(flag is False and score is None and stats.count == 1)
    flag, score, _ = nsigma_update(NSigmaStats.from_values([0.0, 2.0]), 4.0, 5)
    examples.append(flag is False and score == 3.0)
    flag, score, _ = nsigma_update(NSigmaStats.from_values([1.0, 1.0, 1.0]), 1.0, 5)
    examples.append(flag is False and score == 0.0)

    # relative to the operands: mean(|r|) for the mean, mean(r**2) for the variance
    rng = np.random.default_rng(7)
    T = 30
    t = np.arange(40 * T)
    y = np.sin(2 * np.pi * t / T) + 0.1 * rng.standard_normal(t.size)
    prefixes = [np.array([p.residual for p in initialize(y[: 4 * T], Config(period=T)).update_many(y[4 * T :])])]
    for _ in range(50):
        scale = 10 ** rng.uniform(-3, 3)
        prefixes.append(scale * rng.standard_normal(int(rng.integers(1, 2000))) + rng.uniform(-1, 1))
    worst = 0.0
    for r in prefixes:
        stats = NSigmaStats()
        for k, x in enumerate(r, start=1):
            nsigma_update(stats, float(x), 5)
            if k in (1, 2, 3, r.size // 2 or 1, r.size):
                prefix = r[:k]
                worst = max(worst, abs(stats.mean - prefix.mean()) / np.abs(prefix).mean(),
                            abs(stats.variance - prefix.var()) / np.mean(prefix ** 2))
    ok = all(examples) and worst <= 1e-12
    return ok, f"unit examples {sum(examples)}/3, max relative error {worst:.1e} (<= 1e-12)"


# -- 8 ---------------------------------------------------------------------------


def check_forecast():
    T = 48
    t = np.arange(20 * T + 2 * T)
    truth = np.sin(2 * np.pi * t / T) + 0.4 * np.cos(2 * np.pi * 5 * t / T)
    n = 20 * T
    e = initialize(truth[: 4 * T], Config(period=T))
    e.update_many(truth[4 * T : n])
    mae = np.abs(forecast_horizon(e, 2 * T) - truth[n:]).mean()
    periodic = all(forecast_step(e, i) == forecast_step(e, i + T) for i in range(1, 3 * T))
    return mae <= 1e-6 and periodic, f"2T-step MAE {mae:.1e} (<= 1e-6), step(i) == step(i+T): {periodic}"


# -- 9 ---------------------------------------------------------------------------


def check_throughput():
    row = bench_period(1440, points=100_000, iters=8, shift_window=20)
    rate = 1e6 / row.mean_us
    return rate >= 10_000, f"{rate:,.0f} points/s at T=1440, I=8, H=20 (>= 10,000)"


CHECKS = {
    1: check_oracle_equivalence,
    2: check_factorization,
    3: check_irls_descent,
    4: check_constant_cost,
    5: check_trend_jump,
    6: check_phase_shift,
    7: check_nsigma,
    8: check_forecast,
    9: check_throughput,
}


def _line(k, ok, detail):
    return f"{'PASS' if ok else 'FAIL'} criterion {k} ({NAMES[k]}): {detail}"


@pytest.mark.parametrize("k", sorted(CHECKS))
def test_criterion(k):
    ok, detail = CHECKS[k]()
    RESULTS[k] = _line(k, ok, detail)
    print(RESULTS[k])
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for k in sorted(CHECKS):
        ok, detail = CHECKS[k]()
        failed += not ok
        print(_line(k, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
