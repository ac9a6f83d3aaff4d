"""Candlestick-chart images and learned classifiers for next-day stock direction."""

from .market_data import Bar, Series, SplitSpec, load_ticker, parse_csv, serialize_csv, split
from .metrics import ConfusionMatrix, accuracy, confusion, f_measure, mcc, sensitivity, specificity
from .raster import ChartImage, encode_png, price_to_row, render_window, to_tensor
from .windows import DatasetSpec, Label, LabeledSample, class_balance, label_direction, sliding_windows

__version__ = "0.1.0"
