"""Synthetic OHLCV generators for controlled experiments.

``momentum_series`` alternates up- and down-trend runs whose lengths are
drawn from a bounded range, with daily noise well below the drift, so the
next day's direction follows the visible trend except at run boundaries.
Run lengths are only partly visible in short windows, so longer windows
carry strictly more information about upcoming reversals.

``random_walk_series`` is a driftless geometric random walk: no window
predicts the next day better than chance.
"""

from __future__ import annotations

import datetime as dt

import numpy as np

from .market_data import Bar, Series


def business_days(start: dt.date, n: int) -> list[dt.date]:
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += dt.timedelta(days=1)
    return out


def _bars_from_returns(ticker: str, log_returns: np.ndarray, rng: np.random.Generator, start: dt.date, price0: float) -> Series:
    n = len(log_returns)
    close = price0 * np.exp(np.cumsum(log_returns))
    prev = np.concatenate([[price0], close[:-1]])
    opens = prev * np.exp(rng.normal(0.0, 0.001, n))
    wick = np.abs(rng.normal(0.0, 0.004, (2, n)))
    highs = np.maximum(opens, close) * np.exp(wick[0])
    lows = np.minimum(opens, close) * np.exp(-wick[1])
    vols = np.round(rng.lognormal(13.0, 0.4, n)).astype(np.int64)
    dates = business_days(start, n)
    bars = tuple(
        Bar(d, float(o), float(h), float(l), float(c), int(v))
        for d, o, h, l, c, v in zip(dates, opens, highs, lows, close, vols)
    )
    return Series(ticker, bars)


def momentum_series(
    n: int = 2000,
    seed: int = 0,
    drift: float = 0.01,
    noise: float = 0.004,
    run_length: tuple[int, int] = (8, 16),
    ticker: str = "MOMO",
    start: dt.date = dt.date(2000, 1, 3),
) -> Series:
    rng = np.random.default_rng(seed)
    signs = np.empty(n)
    i, s = 0, 1.0 if rng.random() < 0.5 else -1.0
    while i < n:
        length = int(rng.integers(run_length[0], run_length[1] + 1))
        signs[i : i + length] = s
        i += length
        s = -s
    returns = signs * drift + rng.normal(0.0, noise, n)
    return _bars_from_returns(ticker, returns, rng, start, 100.0)


def random_walk_series(
    n: int = 2000,
    seed: int = 0,
    volatility: float = 0.01,
    ticker: str = "RWALK",
    start: dt.date = dt.date(2000, 1, 3),
) -> Series:
    rng = np.random.default_rng(seed)
    return _bars_from_returns(ticker, rng.normal(0.0, volatility, n), rng, start, 100.0)
