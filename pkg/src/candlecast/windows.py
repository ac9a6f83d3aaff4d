"""Sliding windows over a bar series, labelled by next-day direction."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ContractError
from .market_data import Bar, Series

PERIODS = (5, 10, 20)
DIMENSIONS = (20, 50)


class Label(enum.IntEnum):
    DOWN = 0
    UP = 1

    def __str__(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class DatasetSpec:
    period: int = 20
    dimension: int = 50
    volume_panel: bool = False
    horizon: int = 1

    def __post_init__(self):
        if self.period < 2:
            raise ContractError(f"period must be >= 2, got {self.period}")
        if self.dimension < self.period:
            raise ContractError(f"dimension {self.dimension} cannot fit {self.period} candles")
        if self.horizon < 1:
            raise ContractError(f"horizon must be >= 1, got {self.horizon}")


@dataclass(frozen=True)
class LabeledSample:
    ticker: str
    window: tuple[Bar, ...]
    label: Label
    label_date: dt.date

    @property
    def start(self) -> dt.date:
        return self.window[0].date

    @property
    def end(self) -> dt.date:
        return self.window[-1].date


class SampleList(list):
    """A list of samples; ``reason`` explains an empty result."""

    reason: str | None = None


def label_direction(window_last_close: float, future_close: float) -> Label:
    # ties are Down: no gain is not a rise
    if window_last_close <= 0 or future_close <= 0:
        raise ContractError("prices must be positive")
    return Label.UP if future_close > window_last_close else Label.DOWN


def window_count(n: int, period: int, horizon: int = 1) -> int:
    return max(0, n - period - horizon + 1)


def sliding_windows(series: Series, spec: DatasetSpec) -> SampleList:
    """All stride-1 windows of ``spec.period`` bars that have a label.

    Sample ``i`` covers bars ``[i, i + period)`` and is labelled by comparing
    the close of bar ``i + period + horizon - 1`` with the window's last close.
    """
    out = SampleList()
    n = len(series)
    need = spec.period + spec.horizon
    if n < need:
        out.reason = f"{series.ticker}: {n} bars, need at least {need} for period {spec.period}"
        return out
    bars = series.bars
    for i in range(window_count(n, spec.period, spec.horizon)):
        window = bars[i : i + spec.period]
        future = bars[i + spec.period + spec.horizon - 1]
        out.append(LabeledSample(series.ticker, window, label_direction(window[-1].close, future.close), future.date))
    return out


def class_balance(samples: Iterable[LabeledSample]) -> tuple[int, int]:
    up = down = 0
    for s in samples:
        if s.label == Label.UP:
            up += 1
        else:
            down += 1
    return up, down


def assert_no_leakage(samples: Sequence[LabeledSample], last_date: dt.date) -> None:
    """Raise if any sample's label is observed after ``last_date``."""
    for s in samples:
        if s.label_date > last_date:
            raise ContractError(f"{s.ticker} window ending {s.end} is labelled on {s.label_date}, after {last_date}")


def manifest_csv(samples: Iterable[LabeledSample]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["ticker", "window_start", "window_end", "label_date", "label"])
    for s in samples:
        w.writerow([s.ticker, s.start.isoformat(), s.end.isoformat(), s.label_date.isoformat(), str(s.label)])
    return out.getvalue()
