"""Deterministic candlestick rasterizer and a minimal PNG encoder.

Charts are drawn natively at the target size with no anti-aliasing, axes or
resampling, so identical windows always give identical pixels and bytes.
Every pixel is one of four palette colours.
"""

from __future__ import annotations

import datetime as dt
import math
import struct
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError
from .market_data import Bar
from .windows import DatasetSpec

BACKGROUND = (255, 255, 255)
BULLISH = (0, 255, 0)
BEARISH = (255, 0, 0)
VOLUME = (0, 0, 0)
PALETTE = (BACKGROUND, BULLISH, BEARISH, VOLUME)


def round_half_away(x: float) -> int:
    f = math.floor(x)
    frac = x - f  # exact for the magnitudes used here
    if x >= 0:
        return int(f) + (1 if frac >= 0.5 else 0)
    return int(f) + (1 if frac > 0.5 else 0)


@dataclass(frozen=True)
class ChartLayout:
    price_rows: range
    volume_rows: range
    candle_width: int
    gap: int
    wick_width: int = 1

    @property
    def price_height(self) -> int:
        return len(self.price_rows)

    def candle_x(self, k: int) -> int:
        return k * (self.candle_width + self.gap)

    def wick_x(self, k: int) -> int:
        # left of centre when the body width is even
        return self.candle_x(k) + (self.candle_width - self.wick_width) // 2


def chart_layout(spec: DatasetSpec) -> ChartLayout:
    d, p = spec.dimension, spec.period
    cw, gap = d // p - 1, 1
    if cw < 1:
        cw, gap = 1, 0
    if spec.volume_panel:
        vol_h = d // 5
        price_h = d - vol_h - 1
        return ChartLayout(range(0, price_h), range(d - vol_h, d), cw, gap)
    return ChartLayout(range(0, d), range(0), cw, gap)


def price_to_row(p: float, lo: float, hi: float, panel_height: int) -> int:
    """Row of price ``p`` on a vertical scale with ``hi`` at row 0."""
    if panel_height < 1:
        raise ContractError(f"panel_height must be >= 1, got {panel_height}")
    if not lo <= p <= hi:
        raise ContractError(f"price {p} outside [{lo}, {hi}]")
    if hi == lo:
        return (panel_height - 1) // 2
    return round_half_away((hi - p) / (hi - lo) * (panel_height - 1))


@dataclass(frozen=True, eq=False)
class ChartImage:
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ContractError(f"expected (H, W, 3) pixels, got {px.shape}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other):
        return isinstance(other, ChartImage) and np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash(self.pixels.tobytes())


def render_window(window: Sequence[Bar], spec: DatasetSpec) -> ChartImage:
    if len(window) != spec.period:
        raise ContractError(f"window has {len(window)} bars, spec.period is {spec.period}")
    lay = chart_layout(spec)
    d = spec.dimension
    px = np.empty((d, d, 3), dtype=np.uint8)
    px[:] = BACKGROUND

    lo = min(b.low for b in window)
    hi = max(b.high for b in window)
    h = lay.price_height
    top = lay.price_rows.start
    for k, b in enumerate(window):
        colour = BULLISH if b.close > b.open else BEARISH
        r_hi, r_lo = price_to_row(b.high, lo, hi, h), price_to_row(b.low, lo, hi, h)
        r_o, r_c = price_to_row(b.open, lo, hi, h), price_to_row(b.close, lo, hi, h)
        wx = lay.wick_x(k)
        px[top + r_hi : top + r_lo + 1, wx : wx + lay.wick_width] = colour
        x0 = lay.candle_x(k)
        px[top + min(r_o, r_c) : top + max(r_o, r_c) + 1, x0 : x0 + lay.candle_width] = colour

    if len(lay.volume_rows):
        vmax = max(b.volume for b in window)
        vh = len(lay.volume_rows)
        bottom = lay.volume_rows.stop
        for k, b in enumerate(window):
            bar_h = round_half_away(b.volume / vmax * vh) if vmax > 0 else 0
            if bar_h:
                x0 = lay.candle_x(k)
                px[bottom - bar_h : bottom, x0 : x0 + lay.candle_width] = VOLUME
    return ChartImage(px)


def to_tensor(img: ChartImage) -> np.ndarray:
    """(H, W, 3) float32 in [0, 1]."""
    return img.pixels.astype(np.float32) / np.float32(255.0)


def chart_filename(ticker: str, window_end: dt.date, spec: DatasetSpec) -> str:
    vol = "vol" if spec.volume_panel else "novol"
    return f"{ticker}_{window_end.isoformat()}_{spec.period}_{spec.dimension}_{vol}.png"


# --- PNG -------------------------------------------------------------------

_PNG_SIG = b"\x89PNG\r\n\x1a\n"


def _chunk(kind: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + kind + data + struct.pack(">I", zlib.crc32(kind + data) & 0xFFFFFFFF)


def _zlib_stored(data: bytes) -> bytes:
    # Hand-built stored deflate blocks: compressor output can differ between
    # zlib builds, this cannot.
    out = bytearray(b"\x78\x01")
    n = len(data)
    pos = 0
    while True:
        block = data[pos : pos + 0xFFFF]
        pos += len(block)
        final = pos >= n
        out += bytes([1 if final else 0]) + struct.pack("<HH", len(block), len(block) ^ 0xFFFF) + block
        if final:
            break
    out += struct.pack(">I", zlib.adler32(data) & 0xFFFFFFFF)
    return bytes(out)


def encode_png(img: ChartImage) -> bytes:
    """8-bit RGB PNG with only IHDR, IDAT and IEND chunks."""
    h, w = img.height, img.width
    raw = np.zeros((h, 1 + 3 * w), dtype=np.uint8)  # filter byte 0 per scanline
    raw[:, 1:] = img.pixels.reshape(h, 3 * w)
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return _PNG_SIG + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", _zlib_stored(raw.tobytes())) + _chunk(b"IEND", b"")
