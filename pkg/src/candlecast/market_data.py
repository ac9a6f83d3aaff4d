"""OHLCV ingestion, validation and date-range splitting.

Input files follow the Yahoo historical-CSV layout, one ticker per file::

    Date,Open,High,Low,Close,Adj Close,Volume
    2017-01-03,100.0,101.5,99.0,101.0,101.0,1000000

``Adj Close`` may be absent and is ignored when present.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, TextIO

from .errors import ContractError, CsvFormatError, CsvRowError, DataError

log = logging.getLogger(__name__)

HEADER = ("Date", "Open", "High", "Low", "Close", "Adj Close", "Volume")
HEADER_NO_ADJ = ("Date", "Open", "High", "Low", "Close", "Volume")
_MISSING = {"", "null", "NULL", "Null", "NaN", "nan"}


@dataclass(frozen=True)
class Bar:
    date: dt.date
    open: float
    high: float
    low: float
    close: float
    volume: int

    def __post_init__(self):
        prices = (self.open, self.high, self.low, self.close)
        if not all(math.isfinite(p) and p > 0 for p in prices):
            raise ContractError(f"{self.date}: prices must be finite and positive, got {prices}")
        if self.volume < 0:
            raise ContractError(f"{self.date}: negative volume {self.volume}")
        if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            raise ContractError(
                f"{self.date}: inconsistent range O={self.open} H={self.high} L={self.low} C={self.close}"
            )

    @property
    def bullish(self) -> bool:
        return self.close > self.open


@dataclass(frozen=True)
class Series:
    """Bars of one ticker, strictly increasing by date.

    ``skipped`` counts input rows dropped during parsing (missing fields or
    duplicate dates); it does not take part in equality.
    """

    ticker: str
    bars: tuple[Bar, ...]
    skipped: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "bars", tuple(self.bars))
        for a, b in zip(self.bars, self.bars[1:]):
            if not a.date < b.date:
                raise ContractError(f"{self.ticker}: dates not strictly increasing at {a.date} -> {b.date}")

    def __len__(self) -> int:
        return len(self.bars)

    def __iter__(self) -> Iterator[Bar]:
        return iter(self.bars)

    def __getitem__(self, i):
        return self.bars[i]

    @property
    def dates(self) -> list[dt.date]:
        return [b.date for b in self.bars]

    def between(self, start: dt.date, end: dt.date) -> "Series":
        """Sub-series with start <= date <= end (closed on both ends)."""
        return Series(self.ticker, tuple(b for b in self.bars if start <= b.date <= end))

    def before(self, date: dt.date) -> "Series":
        return Series(self.ticker, tuple(b for b in self.bars if b.date < date))


@dataclass(frozen=True)
class SplitSpec:
    train_start: dt.date
    train_end: dt.date
    test_start: dt.date
    test_end: dt.date
    indep_start: dt.date
    indep_end: dt.date

    def __post_init__(self):
        for name in ("train", "test", "indep"):
            s, e = getattr(self, f"{name}_start"), getattr(self, f"{name}_end")
            if s > e:
                raise ContractError(f"{name} range is empty: {s} > {e}")
        if not self.train_end < self.test_start:
            raise ContractError(f"training range must end before testing starts ({self.train_end} >= {self.test_start})")

    @classmethod
    def reference(cls) -> "SplitSpec":
        """Train 2000-2016, test and independent 2017-01-01 to 2018-06-14."""
        d = dt.date
        return cls(d(2000, 1, 1), d(2016, 12, 31), d(2017, 1, 1), d(2018, 6, 14), d(2017, 1, 1), d(2018, 6, 14))


@dataclass(frozen=True)
class SplitResult:
    train: Series
    test: Series
    independent: Series

    def __iter__(self):
        return iter((self.train, self.test, self.independent))

    @property
    def empty_ranges(self) -> tuple[str, ...]:
        return tuple(n for n, s in zip(("train", "test", "independent"), self) if len(s) == 0)


def _parse_date(s: str) -> dt.date:
    return dt.date.fromisoformat(s.strip())


def _parse_volume(s: str) -> int:
    v = float(s)
    if not math.isfinite(v) or v != int(v):
        raise ValueError(f"volume {s!r} is not an integer")
    return int(v)


def parse_csv(text: str | TextIO, ticker: str = "") -> Series:
    """Parse a Yahoo-style CSV into a validated, date-ascending Series.

    Rows with an empty or ``null`` field are skipped, as are repeated dates
    (first occurrence wins); both are counted in ``Series.skipped``. Any other
    bad row raises CsvRowError with its 1-based line number.
    """
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.reader(stream)
    try:
        header = tuple(h.strip().lstrip("﻿") for h in next(reader))
    except StopIteration:
        raise CsvFormatError("empty input, expected a header row") from None
    if header == HEADER:
        idx = (0, 1, 2, 3, 4, 6)
    elif header == HEADER_NO_ADJ:
        idx = (0, 1, 2, 3, 4, 5)
    else:
        raise CsvFormatError(f"unexpected header {','.join(header)!r}; expected {','.join(HEADER)!r}")

    bars: dict[dt.date, Bar] = {}
    skipped = 0
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise CsvRowError(line, f"expected {len(header)} fields, got {len(row)}")
        fields = [row[i].strip() for i in idx]
        if any(f in _MISSING for f in fields):
            skipped += 1
            continue
        try:
            date = _parse_date(fields[0])
            o, h, l, c = (float(f) for f in fields[1:5])
            bar = Bar(date, o, h, l, c, _parse_volume(fields[5]))
        except (ValueError, ContractError) as exc:
            raise CsvRowError(line, str(exc)) from None
        if date in bars:
            skipped += 1
            continue
        bars[date] = bar

    if not bars:
        raise CsvFormatError(f"no valid rows for {ticker or 'input'}")
    if skipped:
        log.info("%s: skipped %d rows", ticker or "input", skipped)
    return Series(ticker, tuple(sorted(bars.values(), key=lambda b: b.date)), skipped)


def serialize_csv(series: Series) -> str:
    """Inverse of parse_csv; Adj Close is written as the close."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(HEADER)
    for b in series:
        w.writerow([b.date.isoformat(), repr(b.open), repr(b.high), repr(b.low), repr(b.close), repr(b.close), b.volume])
    return out.getvalue()


def load_ticker(path: str | Path) -> Series:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing ticker file {path}")
    with path.open(encoding="utf-8", newline="") as fh:
        return parse_csv(fh, ticker=path.stem)


def split(series: Series, spec: SplitSpec) -> SplitResult:
    """Partition a series by the three closed date ranges of ``spec``.

    Bars keep their order. Empty outputs are reported through
    ``SplitResult.empty_ranges`` rather than raised.
    """
    res = SplitResult(
        series.between(spec.train_start, spec.train_end),
        series.between(spec.test_start, spec.test_end),
        series.between(spec.indep_start, spec.indep_end),
    )
    if res.empty_ranges:
        log.warning("%s: empty split ranges %s", series.ticker, ", ".join(res.empty_ranges))
    return res
