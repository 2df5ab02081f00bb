"""Block assembly and two-pass L2-hys normalization in fixed point.

Blocks are 2x2 cells with 50% overlap: cell grid (R, C) yields block grid
(R-1, C-1). A block's 36-value feature is the concatenation
[cell(i,j), cell(i+1,j), cell(i,j+1), cell(i+1,j+1)], 9 bins each.

The normalizer never divides: 1/sqrt comes from the classic bit-pattern seed
0x5F3759DF with a single Newton-Raphson refinement, evaluated on the IEEE754
single-precision image of the operand. Pass one scales by
1/sqrt(sum(h^2) + eps2), quantizes to the post-norm feature format, clips at
the quantized 0.2 constant, pass two renormalizes the clipped vector the same
way. eps2 is one raw LSB of whichever accumulator feeds the sqrt, so all-zero
blocks normalize to all-zero features instead of dividing by zero.

Squares and their sums are exact: the squared-histogram accumulator carries
twice the histogram fraction, and the squared clipped features are summed at
twice the feature fraction, so the only roundings in this stage are the two
inverse-sqrt quantizations and the two per-entry product truncations.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .fixedpoint import (
    DEFAULT_PROFILE,
    Fx,
    FxFormat,
    PrecisionProfile,
    SaturationStats,
    fx_add,
    fx_mul,
    fx_quantize,
    requantize_array,
    requantize_raw,
    saturate_array,
)
from .gradient import N_BINS
from .histogram import CellHistogram
from .stream import GeometryError

INV_SQRT_MAGIC = 0x5F3759DF
BLOCK_VALUES = 4 * N_BINS
CLIP_THRESHOLD = 0.2


def fast_inv_sqrt(x: float) -> float:
    """Approximate 1/sqrt(x) with the bit-pattern seed and one Newton step.

    The operand is rounded to IEEE754 single precision; the seed is the
    pattern 0x5F3759DF - (pattern(x) >> 1); one refinement
    y = y0 * (1.5 - 0.5 * x * y0^2) brings the relative error within 0.18%
    for x in [2**-10, 2**10]. x must be a positive finite real.
    """
    if not (x > 0) or math.isinf(x):
        raise ValueError(f"fast_inv_sqrt needs a positive finite operand, got {x}")
    pattern = struct.unpack("<I", struct.pack("<f", x))[0]
    xf = struct.unpack("<f", struct.pack("<I", pattern))[0]
    seed = INV_SQRT_MAGIC - (pattern >> 1)
    y0 = struct.unpack("<f", struct.pack("<I", seed))[0]
    return y0 * (1.5 - 0.5 * xf * y0 * y0)


def fast_inv_sqrt_field(x: np.ndarray) -> np.ndarray:
    """Array form of fast_inv_sqrt (float64 in, float64 out), bit-identical."""
    xf = np.asarray(x, dtype=np.float64).astype(np.float32)
    if xf.size and (not np.all(xf > 0) or np.any(np.isinf(xf))):
        raise ValueError("fast_inv_sqrt needs positive finite operands")
    seed = (np.int32(INV_SQRT_MAGIC) - (xf.view(np.int32) >> 1)).astype(np.int32)
    y0 = seed.view(np.float32).astype(np.float64)
    return y0 * (1.5 - 0.5 * xf.astype(np.float64) * y0 * y0)


@dataclass(frozen=True)
class BlockGroup:
    """Four cells of one block plus the exact sum of their squared bins."""

    block_row: int
    block_col: int
    cells: tuple[CellHistogram, CellHistogram, CellHistogram, CellHistogram]
    block_sq_sum: Fx


@dataclass(frozen=True)
class NormScratch:
    """Intermediates of one block normalization, for diagnostics and tests."""

    cell_sq_sums: tuple[Fx, Fx, Fx, Fx]
    block_sq_sum: Fx
    inv_norm1: Fx
    inv_norm2: Fx


@dataclass(frozen=True)
class BlockFeature:
    """36 normalized values of one block, in the final feature format."""

    block_row: int
    block_col: int
    values: tuple[Fx, ...]

    def __post_init__(self) -> None:
        if len(self.values) != BLOCK_VALUES:
            raise ValueError(f"expected {BLOCK_VALUES} values, got {len(self.values)}")


def _cell_sq_sum(cell: CellHistogram, fmt: FxFormat, stats: SaturationStats | None) -> Fx:
    total = Fx(0, fmt)
    for b in cell.bins:
        total = fx_add(total, fx_mul(b, b, fmt, stats, "prepare_norm"), fmt, stats, "prepare_norm")
    return total


def block_stream(
    cells: Iterable[CellHistogram],
    cell_cols: int,
    profile: PrecisionProfile = DEFAULT_PROFILE,
    stats: SaturationStats | None = None,
) -> Iterator[BlockGroup]:
    """Group raster-order cells into overlapping 2x2 blocks.

    Block (i, j) is emitted when cell (i+1, j+1) arrives, so blocks stream out
    in raster order one cell row behind the input. A cell grid smaller than
    2x2 cannot form a block and raises a geometry error.
    """
    if cell_cols < 1:
        raise GeometryError(f"cell_cols must be positive, got {cell_cols}")
    fmt = profile.prepare_first_norm
    prev: list[tuple[CellHistogram, Fx] | None] = [None] * cell_cols
    cur: list[tuple[CellHistogram, Fx] | None] = [None] * cell_cols
    rows_seen = 0
    for cell in cells:
        r, c = cell.cell_row, cell.cell_col
        if not 0 <= c < cell_cols:
            raise GeometryError(f"cell_col {c} outside grid of {cell_cols} columns")
        if r != rows_seen - 1 and r != rows_seen:
            raise GeometryError(f"cell row {r} arrived out of raster order")
        if r == rows_seen:
            if rows_seen:
                prev, cur = cur, [None] * cell_cols
            rows_seen += 1
        entry = (cell, _cell_sq_sum(cell, fmt, stats))
        cur[c] = entry
        if r >= 1 and c >= 1:
            tl = prev[c - 1]
            bl = cur[c - 1]
            tr = prev[c]
            br = entry
            if tl is None or bl is None or tr is None:
                raise GeometryError(f"cell ({r},{c}) arrived before its block neighbors")
            sq = Fx(0, fmt)
            for _, s in (tl, bl, tr, br):
                sq = fx_add(sq, s, fmt, stats, "prepare_norm")
            yield BlockGroup(
                block_row=r - 1,
                block_col=c - 1,
                cells=(tl[0], bl[0], tr[0], br[0]),
                block_sq_sum=sq,
            )
    if rows_seen < 2 or cell_cols < 2:
        raise GeometryError(
            f"cell grid {rows_seen}x{cell_cols} is too small to form a block"
        )


def normalize_block_detailed(
    group: BlockGroup,
    profile: PrecisionProfile = DEFAULT_PROFILE,
    stats: SaturationStats | None = None,
) -> tuple[BlockFeature, NormScratch]:
    """normalize_block plus the scratch intermediates."""
    prep_fmt = profile.prepare_first_norm
    n1_fmt = profile.first_inv_sqrt
    f1_fmt = profile.feature_after_first_norm
    n2_fmt = profile.second_inv_sqrt
    out_fmt = profile.final_feature

    cell_sqs = tuple(_cell_sq_sum(c, prep_fmt, stats) for c in group.cells)

    # eps2 = one raw LSB of the squared-sum accumulator
    x1 = (group.block_sq_sum.raw + 1) / prep_fmt.scale
    n1 = fx_quantize(fast_inv_sqrt(x1), n1_fmt, stats, "inv_sqrt1")

    hist_fraction = group.cells[0].bins[0].format.fraction
    f_l2 = []
    for cell in group.cells:
        for b in cell.bins:
            raw = requantize_raw(
                b.raw * n1.raw, hist_fraction + n1_fmt.fraction, f1_fmt, stats, "norm1"
            )
            f_l2.append(raw)

    clip_raw = fx_quantize(CLIP_THRESHOLD, f1_fmt).raw
    f_th = [min(v, clip_raw) for v in f_l2]

    # squared clipped features summed exactly at twice the feature fraction
    sq_fraction = 2 * f1_fmt.fraction
    s2 = sum(v * v for v in f_th) + 1   # + one raw LSB
    n2 = fx_quantize(fast_inv_sqrt(s2 / (1 << sq_fraction)), n2_fmt, stats, "inv_sqrt2")

    values = tuple(
        Fx(
            requantize_raw(
                v * n2.raw, f1_fmt.fraction + n2_fmt.fraction, out_fmt, stats, "norm2"
            ),
            out_fmt,
        )
        for v in f_th
    )
    feature = BlockFeature(block_row=group.block_row, block_col=group.block_col, values=values)
    scratch = NormScratch(
        cell_sq_sums=cell_sqs,
        block_sq_sum=group.block_sq_sum,
        inv_norm1=n1,
        inv_norm2=n2,
    )
    return feature, scratch


def normalize_block(
    group: BlockGroup,
    profile: PrecisionProfile = DEFAULT_PROFILE,
    stats: SaturationStats | None = None,
) -> BlockFeature:
    """Two-pass fixed-point L2-hys normalization of one block."""
    feature, _ = normalize_block_detailed(group, profile, stats)
    return feature


# ---------------------------------------------------------------------------
# whole-frame array path


def block_feature_grid(
    hist_grid: np.ndarray,
    profile: PrecisionProfile = DEFAULT_PROFILE,
    stats: SaturationStats | None = None,
) -> np.ndarray:
    """Normalized block features of a whole cell grid; int64, (R-1, C-1, 36).

    Bit-identical composition of block_stream + normalize_block over the grid.
    """
    rows, cols, _ = hist_grid.shape
    if rows < 2 or cols < 2:
        raise GeometryError(f"cell grid {rows}x{cols} is too small to form a block")
    prep_fmt = profile.prepare_first_norm
    n1_fmt = profile.first_inv_sqrt
    f1_fmt = profile.feature_after_first_norm
    n2_fmt = profile.second_inv_sqrt
    out_fmt = profile.final_feature
    hist_fraction = profile.histogram_value.fraction

    h = hist_grid.astype(np.int64)
    sq = requantize_array(h * h, 2 * hist_fraction, prep_fmt, stats, "prepare_norm")
    cell_sq = saturate_array(sq.sum(axis=2), prep_fmt, stats, "prepare_norm")
    block_sq = cell_sq[:-1, :-1] + cell_sq[1:, :-1] + cell_sq[:-1, 1:] + cell_sq[1:, 1:]
    block_sq = saturate_array(block_sq, prep_fmt, stats, "prepare_norm")

    # feature layout: [cell(i,j), cell(i+1,j), cell(i,j+1), cell(i+1,j+1)]
    f4 = np.concatenate(
        (h[:-1, :-1], h[1:, :-1], h[:-1, 1:], h[1:, 1:]), axis=2
    )

    x1 = (block_sq + 1) / prep_fmt.scale
    n1 = np.floor(fast_inv_sqrt_field(x1) * n1_fmt.scale).astype(np.int64)
    n1 = saturate_array(n1, n1_fmt, stats, "inv_sqrt1")

    f_l2 = requantize_array(
        f4 * n1[:, :, None], hist_fraction + n1_fmt.fraction, f1_fmt, stats, "norm1"
    )
    clip_raw = fx_quantize(CLIP_THRESHOLD, f1_fmt).raw
    f_th = np.minimum(f_l2, clip_raw)

    s2 = (f_th * f_th).sum(axis=2) + 1
    x2 = s2 / (1 << (2 * f1_fmt.fraction))
    n2 = np.floor(fast_inv_sqrt_field(x2) * n2_fmt.scale).astype(np.int64)
    n2 = saturate_array(n2, n2_fmt, stats, "inv_sqrt2")

    out = requantize_array(
        f_th * n2[:, :, None], f1_fmt.fraction + n2_fmt.fraction, out_fmt, stats, "norm2"
    )
    return out


def dump_blocks(grid: np.ndarray) -> bytes:
    """Flat binary blob: row-major blocks, 36 raw values each, little-endian int32."""
    return np.ascontiguousarray(grid, dtype="<i4").tobytes()
