import datetime as dt

import hypothesis
import numpy as np
import pytest

from candlecast.market_data import Bar, Series

hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.load_profile("ci")


def make_series(closes, ticker="TEST", start=dt.date(2017, 1, 2), volume=1000):
    """Bars with open = previous close and a 1% wick on each side."""
    bars = []
    d = start
    prev = closes[0]
    for c in closes:
        while d.weekday() >= 5:
            d += dt.timedelta(days=1)
        o = prev
        bars.append(Bar(d, float(o), max(o, c) * 1.01, min(o, c) * 0.99, float(c), volume))
        prev = c
        d += dt.timedelta(days=1)
    return Series(ticker, tuple(bars))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
