"""Command line interface: decompose, detect, forecast and bench."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Iterable, Iterator, List, Optional, TextIO, Tuple

import numpy as np

from .bench import DEFAULT_PERIODS, DEFAULT_POINTS, run_bench
from .core import Config, InvalidConfig, NonFiniteInput, SolverFailure, validate_config
from .decomposer import OneShotSTL
from .forecast import forecast_horizon
from .periodicity import NoPeriod, estimate_period, tune_lambda
from .series_io import EmptyInput, OutputRecord, ParseError, RecordWriter, iter_series

USER_ERRORS = (InvalidConfig, NonFiniteInput, SolverFailure, ParseError, EmptyInput, NoPeriod, ValueError,
               OSError)


DEFAULT_SHIFT_WINDOW = 20


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors exit with status 1 like every other failure."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--period", type=int, help="seasonal period T in samples")
    g.add_argument("--auto-period", action="store_true", help="estimate T from the autocorrelation")
    lam = p.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lam", type=float, help="set lambda1 = lambda2")
    lam.add_argument("--tune-lambda", action="store_true", help="pick lambda on the init segment")
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--iters", type=int, default=8, help="reweighting iterations per point (default 8)")
    p.add_argument("--shift-window", type=int,
                   help=f"max phase shift searched (default min({DEFAULT_SHIFT_WINDOW}, T-1))")
    p.add_argument("--nsigma", type=float, default=5.0, help="anomaly threshold in std units (default 5)")
    p.add_argument("--init-len", type=int, help="points used for initialization (default 4*T)")
    p.add_argument("--input", nargs="+", default=["-"], help="input file(s); '-' is stdin")
    p.add_argument("--output", default="-", help="output file, or directory for several inputs")
    p.add_argument("--stream", action="store_true", help="emit each record as soon as its line is read")
    p.add_argument("--resume", metavar="STATE", help="continue from a saved state instead of initializing")
    p.add_argument("--save-state", metavar="STATE", help="write the final state to this file")
    p.add_argument("--parallel", type=int, default=1, help="worker processes for several inputs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oneshotstl", description="Streaming seasonal-trend decomposition")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, help_text in (("decompose", "trend/seasonal/residual per point"),
                            ("detect", "decomposition plus n-sigma anomaly scores")):
        p = sub.add_parser(name, help=help_text)
        _add_model_args(p)
        p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
        p.add_argument("--emit-init", action="store_true", help="also write the init segment rows")

    p = sub.add_parser("forecast", help="forecast after consuming the input")
    _add_model_args(p)
    p.add_argument("--horizon", type=int, required=True, help="number of steps to forecast")

    p = sub.add_parser("bench", help="per-point latency across periods")
    p.add_argument("--periods", type=int, nargs="+", default=list(DEFAULT_PERIODS))
    p.add_argument("--points", type=int, default=DEFAULT_POINTS)
    p.add_argument("--warmup", type=float, default=0.05, help="fraction of stream points not timed")
    p.add_argument("--iters", type=int, default=8)
    p.add_argument("--shift-window", type=int, default=20)
    p.add_argument("--oracle", action="store_true", help="bench the full-rebuild reference instead")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="write the report as CSV to this file ('-' for stdout)")
    return parser


# ---------------------------------------------------------------------------
# configuration


def _init_len(args, period: int) -> int:
    return args.init_len if args.init_len is not None else 4 * period


def make_config(args, period: int, init_values: Optional[np.ndarray] = None) -> Config:
    lam1 = lam2 = 1.0
    if args.lam is not None:
        lam1 = lam2 = args.lam
    if args.tune_lambda:
        if init_values is None:
            raise UsageError("--tune-lambda needs the init segment")
        lam1 = lam2 = tune_lambda(init_values, period)[0]
    if args.lambda1 is not None:
        lam1 = args.lambda1
    if args.lambda2 is not None:
        lam2 = args.lambda2
    if period < 2:
        raise InvalidConfig("T >= 2 required (period)")
    H = args.shift_window if args.shift_window is not None else min(DEFAULT_SHIFT_WINDOW, period - 1)
    cfg = Config(
        period=period, shift_window=H, lambda1=lam1, lambda2=lam2, max_iters=args.iters,
        nsigma_n=args.nsigma, init_len=args.init_len,
    )
    return validate_config(cfg)


def _detect_period(values: np.ndarray, args) -> int:
    n = values.size
    limit = args.init_len // 2 if args.init_len else n // 4
    if limit <= 2:
        raise UsageError("too few values to estimate the period")
    est = estimate_period(values if not args.init_len else values[: args.init_len], 2, limit)
    print(f"estimated period {est.period} (acf {est.acf_peak:.3f})", file=sys.stderr)
    return est.period


# ---------------------------------------------------------------------------
# processing one input


def _values(source: str) -> Iterator[float]:
    if source == "-":
        for v, _ in iter_series(sys.stdin):
            yield v
        return
    with open(source) as fh:
        for v, _ in iter_series(fh):
            yield v


def _take(it: Iterator[float], n: int) -> List[float]:
    out = []
    for v in it:
        out.append(v)
        if len(out) == n:
            break
    return out


def _start(args, source: str) -> Tuple[OneShotSTL, Iterator[float], List[float]]:
    """Build or restore the engine; return it, the remaining values and the init values."""
    values = _values(source)
    if args.resume:
        if args.period or args.auto_period or args.tune_lambda:
            print("warning: --resume uses the saved configuration; model flags are ignored", file=sys.stderr)
        return OneShotSTL.load(args.resume), values, []
    if args.period is None and not args.auto_period:
        raise UsageError("one of --period or --auto-period is required")
    if args.auto_period:
        if args.stream and args.init_len is None:
            raise UsageError("--auto-period with --stream needs --init-len")
        if args.init_len is not None:
            head = _take(values, args.init_len)
        else:
            head = list(values)
        period = _detect_period(np.array(head), args)
    else:
        period = args.period
        head = _take(values, _init_len(args, period))
    t0 = _init_len(args, period)
    if len(head) < t0:
        raise UsageError(f"input has {len(head)} values but init needs {t0}")
    init, rest_head = head[:t0], head[t0:]
    cfg = make_config(args, period, np.array(init))
    engine = OneShotSTL.initialize(np.array(init), cfg)

    def remaining():
        yield from rest_head
        yield from values

    return engine, remaining(), init


def _open_out(path: str) -> TextIO:
    return sys.stdout if path == "-" else open(path, "w")


def process(args, source: str, out_path: str) -> int:
    """Run decompose/detect/forecast on one input; returns the number of streamed points."""
    engine, values, init = _start(args, source)
    if args.command == "forecast":
        n = 0
        for v in values:
            engine.update(v)
            n += 1
        out = _open_out(out_path)
        try:
            for x in forecast_horizon(engine, args.horizon):
                out.write(repr(float(x)) + "\n")
            out.flush()
        finally:
            if out is not sys.stdout:
                out.close()
        if args.save_state:
            engine.save(args.save_state)
        return n

    detect = args.command == "detect"
    out = _open_out(out_path)
    n = 0
    try:
        writer = RecordWriter(out, args.format, detect=detect, emit_init=args.emit_init, flush_each=args.stream)
        if args.emit_init and init:
            d = engine.init_decomposition
            for i, y in enumerate(init):
                rec = OutputRecord(i, float(y), float(d.trend[i]), float(d.seasonal[i]), float(d.residual[i]), 0,
                                   0.0 if detect else None, False if detect else None, True)
                writer.write(rec)
        for v in values:
            index = engine.t
            pt = engine.update(v)
            writer.write(OutputRecord.from_point(index, v, pt, detect, False if args.emit_init else None))
            n += 1
        writer.finish()
    finally:
        if out is not sys.stdout:
            out.close()
    if args.save_state:
        engine.save(args.save_state)
    return n


def _process_job(job) -> Tuple[str, Optional[str]]:
    args, source, out_path = job
    try:
        process(args, source, out_path)
    except USER_ERRORS + (UsageError,) as exc:
        return source, str(exc)
    return source, None


def _run_many(args) -> int:
    if args.stream or args.resume or args.save_state:
        raise UsageError("--stream, --resume and --save-state take a single input")
    if args.output == "-":
        raise UsageError("several inputs need --output DIR")
    os.makedirs(args.output, exist_ok=True)
    ext = "txt" if args.command == "forecast" else args.format
    jobs = []
    for src in args.input:
        base = os.path.splitext(os.path.basename(src))[0]
        jobs.append((args, src, os.path.join(args.output, f"{base}.{ext}")))
    failed = 0
    with ProcessPoolExecutor(max_workers=max(1, args.parallel)) as pool:
        for src, err in pool.map(_process_job, jobs):
            if err is not None:
                failed += 1
                print(f"error: {src}: {err}", file=sys.stderr)
    return 1 if failed else 0


def run_bench_cmd(args) -> int:
    report = run_bench(args.periods, args.points, args.warmup, args.iters, args.shift_window, args.oracle,
                       args.seed, progress=sys.stderr)
    print(report.format_table())
    if args.csv:
        out = _open_out(args.csv)
        try:
            report.write_csv(out)
        finally:
            if out is not sys.stdout:
                out.close()
    return 0


def main(argv: Optional[Iterable[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(None if argv is None else list(argv))
    try:
        if args.command == "bench":
            return run_bench_cmd(args)
        if args.command == "forecast" and args.horizon < 1:
            raise UsageError("--horizon must be >= 1")
        if args.parallel < 1:
            raise UsageError("--parallel must be >= 1")
        if len(args.input) > 1:
            return _run_many(args)
        process(args, args.input[0], args.output)
        return 0
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        return 1
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
