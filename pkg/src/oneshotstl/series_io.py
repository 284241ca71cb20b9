"""Reading input series and writing decomposition records.

Input is either one number per line or CSV with a ``value`` column and an
optional ``timestamp`` column. Output is CSV or JSON lines; floats are
written with ``repr`` so they read back bit-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, List, Optional, TextIO, Tuple, Union

import numpy as np

from .core import TimeSeries

DECOMPOSE_COLUMNS = ("index", "value", "trend", "seasonal", "residual", "shift")
DETECT_COLUMNS = ("score", "is_anomaly")
INIT_COLUMN = "init"


class ParseError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class EmptyInput(ValueError):
    pass


def _number(text: str, line: int) -> float:
    try:
        x = float(text)
    except ValueError:
        raise ParseError(line, f"not a number: {text.strip()!r}") from None
    if not math.isfinite(x):
        raise ParseError(line, "non-finite")
    return x


def _is_header(line: str) -> bool:
    first = line.split(",")[0].strip()
    try:
        float(first)
    except ValueError:
        return True
    return False


def iter_series(lines: Iterable[str]) -> Iterator[Tuple[float, Optional[int]]]:
    """Yield ``(value, timestamp)`` pairs lazily; blank lines are skipped.

    Reads one line at a time, so it is safe on an unbounded pipe.
    """
    value_col = None
    ts_col = None
    header_seen = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if not header_seen:
            header_seen = True
            if _is_header(line):
                names = [c.strip().lower() for c in next(csv.reader([line]))]
                if "value" not in names:
                    raise ParseError(lineno, "CSV header needs a 'value' column")
                value_col = names.index("value")
                ts_col = names.index("timestamp") if "timestamp" in names else None
                continue
        if value_col is None:
            yield _number(line, lineno), None
            continue
        fields = next(csv.reader([line]))
        if len(fields) <= value_col:
            raise ParseError(lineno, "missing value field")
        ts = None
        if ts_col is not None:
            if len(fields) <= ts_col:
                raise ParseError(lineno, "missing timestamp field")
            try:
                ts = int(fields[ts_col])
            except ValueError:
                raise ParseError(lineno, f"bad timestamp: {fields[ts_col]!r}") from None
        yield _number(fields[value_col], lineno), ts


def parse_lines(lines: Iterable[str]) -> TimeSeries:
    values: List[float] = []
    stamps: List[Optional[int]] = []
    for v, ts in iter_series(lines):
        values.append(v)
        stamps.append(ts)
    if not values:
        raise EmptyInput("no values in input")
    timestamps = None if any(s is None for s in stamps) else np.array(stamps, dtype=np.int64)
    return TimeSeries(np.array(values), timestamps)


def parse_series(source: Union[str, IO[str], None] = None) -> TimeSeries:
    """Parse a file path, an open text stream, or standard input (``None`` or ``"-"``)."""
    if source is None or source == "-":
        return parse_lines(sys.stdin)
    if isinstance(source, str):
        with open(source) as fh:
            return parse_lines(fh)
    return parse_lines(source)


def parse_text(text: str) -> TimeSeries:
    return parse_lines(io.StringIO(text))


@dataclass(frozen=True)
class OutputRecord:
    index: int
    value: float
    trend: float
    seasonal: float
    residual: float
    shift: int = 0
    score: Optional[float] = None
    is_anomaly: Optional[bool] = None
    init: Optional[bool] = None

    @classmethod
    def from_point(cls, index: int, value: float, point, detect: bool = False,
                   init: Optional[bool] = None) -> "OutputRecord":
        score = is_anomaly = None
        if detect:
            score = point.score if point.score is not None else 0.0
            is_anomaly = bool(point.is_anomaly)
        return cls(index, float(value), point.trend, point.seasonal, point.residual, int(point.shift),
                   score, is_anomaly, init)


def record_columns(detect: bool = False, emit_init: bool = False) -> Tuple[str, ...]:
    cols = DECOMPOSE_COLUMNS
    if detect:
        cols += DETECT_COLUMNS
    if emit_init:
        cols += (INIT_COLUMN,)
    return cols


def _cell(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


class RecordWriter:
    """Writes records as CSV or JSON lines; ``flush_each`` flushes after every record."""

    def __init__(self, out: TextIO, fmt: str = "csv", detect: bool = False, emit_init: bool = False,
                 flush_each: bool = False):
        if fmt not in ("csv", "jsonl"):
            raise ValueError(f"unknown format {fmt!r}")
        self.out = out
        self.fmt = fmt
        self.columns = record_columns(detect, emit_init)
        self.flush_each = flush_each
        self._header_done = fmt != "csv"

    def write(self, rec: OutputRecord) -> None:
        if not self._header_done:
            self.out.write(",".join(self.columns) + "\n")
            self._header_done = True
        row = [getattr(rec, c) for c in self.columns]
        if self.fmt == "csv":
            self.out.write(",".join(_cell(x) for x in row) + "\n")
        else:
            self.out.write(json.dumps(dict(zip(self.columns, row))) + "\n")
        if self.flush_each:
            self.out.flush()

    def write_all(self, records: Iterable[OutputRecord]) -> None:
        for rec in records:
            self.write(rec)

    def finish(self) -> None:
        if not self._header_done:
            self.out.write(",".join(self.columns) + "\n")
            self._header_done = True
        self.out.flush()


def read_records(text: str, fmt: str = "csv") -> List[dict]:
    """Parse writer output back into dicts of Python values (used by tests and tools)."""
    rows: List[dict] = []
    if fmt == "jsonl":
        return [json.loads(line) for line in text.splitlines() if line.strip()]
    reader = csv.DictReader(io.StringIO(text))
    for row in reader:
        rec = {}
        for k, v in row.items():
            if k in ("index", "shift"):
                rec[k] = int(v)
            elif k in ("is_anomaly", INIT_COLUMN):
                rec[k] = v == "true"
            else:
                rec[k] = float(v)
        rows.append(rec)
    return rows
