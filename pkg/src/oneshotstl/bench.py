"""Per-point latency benchmark across seasonal periods."""

from __future__ import annotations

import csv
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, TextIO

import numpy as np

from .batch import iter_modified_joint_stl
from .core import Config
from .decomposer import OneShotSTL

DEFAULT_PERIODS = (100, 200, 400, 800, 1600, 3200, 6400, 12800)
DEFAULT_POINTS = 200_000


@dataclass
class BenchRow:
    period: int
    points: int
    mean_us: float
    median_us: float
    p99_us: float
    ops_per_point: int
    search_rate: float
    init_seconds: float
    growth: float


@dataclass
class BenchReport:
    engine: str
    rows: List[BenchRow] = field(default_factory=list)

    def row(self, period: int) -> BenchRow:
        for r in self.rows:
            if r.period == period:
                return r
        raise KeyError(period)

    def flatness(self) -> float:
        """Largest mean latency divided by the smallest."""
        means = [r.mean_us for r in self.rows]
        return max(means) / min(means)

    def write_csv(self, out: TextIO) -> None:
        names = list(BenchRow.__dataclass_fields__)
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["engine"] + names)
        for r in self.rows:
            d = asdict(r)
            w.writerow([self.engine] + [d[n] for n in names])

    def format_table(self) -> str:
        lines = [f"{'T':>7} {'points':>8} {'mean_us':>9} {'median_us':>10} {'p99_us':>9} {'ops':>6} "
                 f"{'search':>7} {'growth':>7}"]
        for r in self.rows:
            lines.append(f"{r.period:>7} {r.points:>8} {r.mean_us:>9.2f} {r.median_us:>10.2f} "
                         f"{r.p99_us:>9.2f} {r.ops_per_point:>6} {r.search_rate:>7.4f} {r.growth:>7.2f}")
        return "\n".join(lines)


def synthetic_stream(period: int, n: int, seed: int = 0, noise: float = 0.1) -> np.ndarray:
    """Unit sinusoid with a slow linear trend and Gaussian noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    return 1e-5 * t + np.sin(2 * np.pi * t / period) + noise * rng.standard_normal(n)


def _summary(period: int, lat_ns: np.ndarray, ops: Sequence[int], searches: int, init_s: float) -> BenchRow:
    us = lat_ns / 1e3
    # the modal count is the plain-update cost; searched points cost more
    modal = Counter(ops).most_common(1)[0][0] if len(ops) else 0
    # mean latency of the last tenth over the first tenth of the stream
    k = max(us.size // 10, 1)
    growth = float(np.mean(us[-k:]) / np.mean(us[:k]))
    return BenchRow(period, int(us.size), float(us.mean()), float(np.median(us)),
                    float(np.percentile(us, 99)), int(modal), searches / max(us.size, 1), init_s, growth)


def bench_period(period: int, points: int = DEFAULT_POINTS, warmup: float = 0.05, iters: int = 8,
                 shift_window: int = 20, seed: int = 0) -> BenchRow:
    """Initialize on ``4T`` points, stream the rest and time every update."""
    cfg = Config(period=period, max_iters=iters, shift_window=min(shift_window, period - 1))
    t0 = cfg.t0
    if points <= t0:
        raise ValueError(f"points={points} must exceed the init length {t0}")
    y = synthetic_stream(period, points, seed)
    start = time.perf_counter()
    engine = OneShotSTL.initialize(y[:t0], cfg)
    init_s = time.perf_counter() - start
    stream = y[t0:]
    n_warm = int(warmup * stream.size)
    for v in stream[:n_warm]:
        engine.update(v)
    rest = stream[n_warm:]
    lat = np.empty(rest.size, dtype=np.int64)
    ops = np.empty(rest.size, dtype=np.int64)
    searches0 = engine.searches
    clock = time.perf_counter_ns
    update = engine.update
    for k, v in enumerate(rest):
        a = clock()
        update(v)
        lat[k] = clock() - a
        ops[k] = engine.last_ops
    return _summary(period, lat, ops.tolist(), engine.searches - searches0, init_s)


def bench_oracle_period(period: int, points: int, iters: int = 8, seed: int = 0) -> BenchRow:
    """Time the full-rebuild reference on ``points`` stream values (cost grows per point)."""
    cfg = Config(period=period, max_iters=iters, shift_window=0)
    t0 = cfg.t0
    y = synthetic_stream(period, t0 + points, seed)
    it = iter_modified_joint_stl(y[:t0], y[t0:], cfg)
    lat = np.empty(points, dtype=np.int64)
    clock = time.perf_counter_ns
    a = clock()
    for k in range(points):
        next(it)
        b = clock()
        lat[k] = b - a
        a = b
    # the first yield also pays for the batch initialization
    init_s = lat[0] / 1e9
    lat[0] = lat[1] if points > 1 else lat[0]
    return _summary(period, lat, [], 0, init_s)


def run_bench(periods: Sequence[int] = DEFAULT_PERIODS, points: int = DEFAULT_POINTS, warmup: float = 0.05,
              iters: int = 8, shift_window: int = 20, oracle: bool = False, seed: int = 0,
              progress: Optional[TextIO] = None) -> BenchReport:
    report = BenchReport("oracle" if oracle else "online")
    for T in periods:
        if oracle:
            row = bench_oracle_period(T, points, iters, seed)
        else:
            row = bench_period(T, points, warmup, iters, shift_window, seed)
        report.rows.append(row)
        if progress is not None:
            progress.write(f"T={T}: mean {row.mean_us:.2f} us over {row.points} points\n")
            progress.flush()
    return report
