"""Streaming per-cell orientation histograms with the uniform split rule.

Every pixel's magnitude is halved once (arithmetic shift of the raw value)
and the same halved amount goes to both bins of its orientation pair. Cells
are 8x8 pixels; one accumulator per cell column is enough because pixels
arrive in raster order. A cell's histogram is emitted as soon as its
bottom-right pixel has been consumed, so a row of cells streams out
left-to-right while the 8th pixel row is still being eaten.

Accumulation happens in the histogram format, which carries one more
fractional bit than the magnitude: widening the halved contribution into it
is exact, so the only truncation in this stage is the single halving shift.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .fixedpoint import DEFAULT_PROFILE, Fx, FxFormat, SaturationStats, saturate_array, saturate_raw
from .gradient import N_BINS, BinnedGradient
from .stream import CELL, GeometryError, StreamProtocolError


@dataclass(frozen=True)
class CellHistogram:
    """9 accumulated bin values for one 8x8 cell."""

    cell_row: int
    cell_col: int
    bins: tuple[Fx, ...]

    def __post_init__(self) -> None:
        if len(self.bins) != N_BINS:
            raise ValueError(f"expected {N_BINS} bins, got {len(self.bins)}")


def split_contribution(bg: BinnedGradient) -> tuple[Fx, Fx]:
    """Uniform split: both bins of the pair receive magnitude >> 1.

    The shift truncates the raw value once; e.g. raw 5 (0.625) contributes
    raw 2 (0.25) to each bin.
    """
    half = Fx(bg.magnitude.raw >> 1, bg.magnitude.format)
    return half, half


def accumulate_cells(
    packets: Iterable[Sequence[BinnedGradient]],
    width: int,
    fmt: FxFormat = DEFAULT_PROFILE.histogram_value,
    stats: SaturationStats | None = None,
) -> Iterator[CellHistogram]:
    """Consume raster-order binned-gradient packets, emit completed cells.

    The frame height is implied by the stream length and must be a multiple
    of 8, as must the width; a packet that straddles a row boundary or a
    stream that ends mid-cell is a protocol error.
    """
    if width % CELL or width <= 0:
        raise GeometryError(f"width must be a positive multiple of {CELL}, got {width}")
    n_cols = width // CELL
    widen = fmt.fraction  # contributions arrive at magnitude fraction, widen into fmt
    acc = [[0] * N_BINS for _ in range(n_cols)]
    x = 0
    y = 0
    for pkt in packets:
        ppc = len(pkt)
        if ppc == 0 or width % ppc or x % ppc:
            raise StreamProtocolError(f"packet of {ppc} lanes misaligned at x={x}")
        for lane, bg in enumerate(pkt):
            px = x + lane
            col = px // CELL
            shift = widen - bg.magnitude.format.fraction
            half = (bg.magnitude.raw >> 1) << shift
            bins = acc[col]
            bins[bg.bin_lo] = saturate_raw(bins[bg.bin_lo] + half, fmt, stats, "histogram")
            bins[bg.bin_hi] = saturate_raw(bins[bg.bin_hi] + half, fmt, stats, "histogram")
            if y % CELL == CELL - 1 and px % CELL == CELL - 1:
                yield CellHistogram(
                    cell_row=y // CELL,
                    cell_col=col,
                    bins=tuple(Fx(v, fmt) for v in bins),
                )
                acc[col] = [0] * N_BINS
        x += ppc
        if x == width:
            x = 0
            y += 1
        elif x > width:
            raise StreamProtocolError("packet crossed a row boundary")
    if x != 0 or y % CELL != 0:
        raise StreamProtocolError(f"stream ended mid-cell at x={x}, y={y}")


# ---------------------------------------------------------------------------
# whole-frame array path


def cell_histogram_grid(
    mag_raw: np.ndarray,
    bin_lo: np.ndarray,
    bin_hi: np.ndarray,
    fmt: FxFormat = DEFAULT_PROFILE.histogram_value,
    mag_fmt: FxFormat = DEFAULT_PROFILE.gradient_magnitude,
    stats: SaturationStats | None = None,
) -> np.ndarray:
    """Per-cell histograms of a full frame; int64 raws, shape (rows, cols, 9).

    Bit-identical to accumulate_cells: the halved contribution is widened into
    the histogram fraction and summed per cell (integer addition is exact and
    order-free, saturation is checked on the totals, which can only trip if an
    individual add would have).
    """
    h, w = mag_raw.shape
    if h % CELL or w % CELL:
        raise GeometryError(f"frame {w}x{h} is not a multiple of {CELL}")
    contrib = ((mag_raw.astype(np.int64) >> 1) << (fmt.fraction - mag_fmt.fraction))
    rows, cols = h // CELL, w // CELL
    grid = np.zeros((rows, cols, N_BINS), dtype=np.int64)
    for k in range(N_BINS):
        sel = contrib * ((bin_lo == k) | (bin_hi == k))
        grid[:, :, k] = sel.reshape(rows, CELL, cols, CELL).sum(axis=(1, 3))
    return saturate_array(grid, fmt, stats, "histogram")


def dump_cells(grid: np.ndarray) -> bytes:
    """Flat binary blob: row-major cells, 9 raw values each, little-endian int32."""
    return np.ascontiguousarray(grid, dtype="<i4").tobytes()
