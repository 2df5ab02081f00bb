"""Linear SVM scoring over the sliding 64x128 window, plus model file IO.

A detection window covers 15x7 blocks (16x8 cells). Scoring is organized the
way the hardware does it: each block's 36-value feature is dotted with the
matching 36 coefficients as four sequential 9-value partial dots, and every
window anchor accumulates the 105 block dots that fall inside it plus the
bias. Products of feature (10,9) and coefficient (11,10) raws already sit at
the accumulator fraction (19), so accumulation is exact integer arithmetic:
any evaluation order gives the same raw score, and the single saturation
check happens on the final per-anchor total.

Model files are line-oriented text. Quantized ("HOGSVM1"):

    HOGSVM1
    bias <raw int, (33,19)>
    <block_row> <block_col> <index 0..35> <raw int, (11,10)>   x 3780

Float ("HOGSVMF1") has the same shape with decimal reals (repr round-trip).
Rows are written in canonical order (block_row, then block_col, then index);
loaders accept any order but require every coefficient exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .fixedpoint import (
    DEFAULT_PROFILE,
    Fx,
    FxFormat,
    PrecisionProfile,
    SaturationStats,
    saturate_array,
)
from .normalize import BLOCK_VALUES, BlockFeature
from .stream import GeometryError

WINDOW_BLOCK_ROWS = 15
WINDOW_BLOCK_COLS = 7
WINDOW_BLOCKS = WINDOW_BLOCK_ROWS * WINDOW_BLOCK_COLS
WINDOW_FEATURES = WINDOW_BLOCKS * BLOCK_VALUES
PARTIAL_DOT = 9

QUANT_MAGIC = "HOGSVM1"
FLOAT_MAGIC = "HOGSVMF1"


class ModelFormatError(ValueError):
    """Model file violates the expected text format."""


@dataclass
class SvmModel:
    """Quantized window classifier: per-block coefficients plus bias.

    weights_raw is int64 of shape (15, 7, 36) in the coefficient format;
    decoded magnitudes are strictly below 1. Flattened in C order it lines up
    with the window feature vector (block_row, block_col, index).
    """

    weights_raw: np.ndarray
    bias_raw: int
    coeff_fmt: FxFormat = field(default=DEFAULT_PROFILE.svm_coefficient)
    bias_fmt: FxFormat = field(default=DEFAULT_PROFILE.svm_bias)
    scale_applied: float = 1.0
    max_weight_quant_error: float = 0.0

    def __post_init__(self) -> None:
        w = np.asarray(self.weights_raw, dtype=np.int64)
        if w.shape != (WINDOW_BLOCK_ROWS, WINDOW_BLOCK_COLS, BLOCK_VALUES):
            raise ValueError(f"weights shape {w.shape} is not "
                             f"({WINDOW_BLOCK_ROWS}, {WINDOW_BLOCK_COLS}, {BLOCK_VALUES})")
        limit = self.coeff_fmt.max_raw
        if np.any(np.abs(w) > limit):
            raise ValueError("coefficient magnitude reaches 1.0; model must be rescaled")
        if not self.bias_fmt.min_raw <= self.bias_raw <= self.bias_fmt.max_raw:
            raise ValueError(f"bias raw {self.bias_raw} does not fit {self.bias_fmt}")
        self.weights_raw = w

    @property
    def bias(self) -> Fx:
        return Fx(self.bias_raw, self.bias_fmt)

    def weight(self, block_row: int, block_col: int, index: int) -> Fx:
        return Fx(int(self.weights_raw[block_row, block_col, index]), self.coeff_fmt)


@dataclass(frozen=True)
class ScoreMap:
    """Raw window scores on the anchor grid (one anchor per cell position)."""

    scores_raw: np.ndarray
    fmt: FxFormat = field(default=DEFAULT_PROFILE.svm_prediction)

    @property
    def anchor_rows(self) -> int:
        return self.scores_raw.shape[0]

    @property
    def anchor_cols(self) -> int:
        return self.scores_raw.shape[1]

    def score(self, anchor_row: int, anchor_col: int) -> Fx:
        return Fx(int(self.scores_raw[anchor_row, anchor_col]), self.fmt)

    def decode(self) -> np.ndarray:
        return self.scores_raw / self.fmt.scale


def score_grid(
    block_raw: np.ndarray,
    model: SvmModel,
    stats: SaturationStats | None = None,
    feature_fmt: FxFormat = DEFAULT_PROFILE.final_feature,
) -> ScoreMap:
    """Score every window anchor of a block-feature grid.

    block_raw: int64 (block_rows, block_cols, 36) in the final feature format.
    Anchors exist where a full 15x7 block neighborhood fits; an empty anchor
    grid (frame smaller than one window) yields a 0x0 map.
    """
    br, bc, nv = block_raw.shape
    if nv != BLOCK_VALUES:
        raise GeometryError(f"block features carry {nv} values, expected {BLOCK_VALUES}")
    ar = br - (WINDOW_BLOCK_ROWS - 1)
    ac = bc - (WINDOW_BLOCK_COLS - 1)
    if ar <= 0 or ac <= 0:
        return ScoreMap(scores_raw=np.zeros((max(ar, 0), max(ac, 0)), dtype=np.int64),
                        fmt=model.bias_fmt)

    shift = model.bias_fmt.fraction - (feature_fmt.fraction + model.coeff_fmt.fraction)
    if shift != 0:
        raise GeometryError(
            "feature and coefficient fractions must sum to the accumulator fraction"
        )

    # per-block dot against each of the 105 coefficient sets, as four
    # sequential 9-value partial dots; every product is exact in float64
    # (|f| < 2**9, |w| < 2**10, 9-term sums < 2**23), so the matmul is an
    # exact integer computation at BLAS speed
    flat = block_raw.reshape(br * bc, BLOCK_VALUES).astype(np.float64)
    wmat = model.weights_raw.reshape(WINDOW_BLOCKS, BLOCK_VALUES).astype(np.float64)
    dots = np.zeros((br * bc, WINDOW_BLOCKS), dtype=np.int64)
    for q in range(0, BLOCK_VALUES, PARTIAL_DOT):
        dots += (flat[:, q : q + PARTIAL_DOT] @ wmat[:, q : q + PARTIAL_DOT].T).astype(np.int64)
    dots = dots.reshape(br, bc, WINDOW_BLOCKS)

    scores = np.full((ar, ac), int(model.bias_raw), dtype=np.int64)
    for r in range(WINDOW_BLOCK_ROWS):
        for c in range(WINDOW_BLOCK_COLS):
            scores += dots[r : r + ar, c : c + ac, r * WINDOW_BLOCK_COLS + c]
    scores = saturate_array(scores, model.bias_fmt, stats, "svm")
    return ScoreMap(scores_raw=scores, fmt=model.bias_fmt)


def score_windows(
    blocks: Iterable[BlockFeature],
    model: SvmModel,
    block_rows: int,
    block_cols: int,
    stats: SaturationStats | None = None,
) -> ScoreMap:
    """Score a raster-order block-feature stream (grid form of score_grid)."""
    if block_rows < 1 or block_cols < 1:
        raise GeometryError(f"block grid {block_rows}x{block_cols} is empty")
    grid = np.zeros((block_rows, block_cols, BLOCK_VALUES), dtype=np.int64)
    seen = np.zeros((block_rows, block_cols), dtype=bool)
    feature_fmt = None
    for bf in blocks:
        r, c = bf.block_row, bf.block_col
        if not (0 <= r < block_rows and 0 <= c < block_cols):
            raise GeometryError(f"block ({r},{c}) outside {block_rows}x{block_cols} grid")
        grid[r, c] = [v.raw for v in bf.values]
        seen[r, c] = True
        feature_fmt = bf.values[0].format
    if not seen.all():
        raise GeometryError("block stream did not cover the full grid")
    return score_grid(grid, model, stats, feature_fmt or DEFAULT_PROFILE.final_feature)


def classify(score: Fx, threshold: Fx) -> bool:
    """Strict comparison: a window is a detection iff score > threshold."""
    if score.format != threshold.format:
        raise ValueError(f"score {score.format} vs threshold {threshold.format}")
    return score.raw > threshold.raw


# ---------------------------------------------------------------------------
# model file IO


def _canonical_rows() -> Iterable[tuple[int, int, int]]:
    for r in range(WINDOW_BLOCK_ROWS):
        for c in range(WINDOW_BLOCK_COLS):
            for k in range(BLOCK_VALUES):
                yield r, c, k


def save_model(model: SvmModel, path: str | Path) -> None:
    """Write the quantized model in the HOGSVM1 text format."""
    lines = [QUANT_MAGIC, f"bias {model.bias_raw}"]
    for r, c, k in _canonical_rows():
        lines.append(f"{r} {c} {k} {int(model.weights_raw[r, c, k])}")
    Path(path).write_text("\n".join(lines) + "\n")


def save_float_model(weights: np.ndarray, bias: float, path: str | Path) -> None:
    """Write a float model (3780 weights + bias) in the HOGSVMF1 text format."""
    w = np.asarray(weights, dtype=np.float64).reshape(
        WINDOW_BLOCK_ROWS, WINDOW_BLOCK_COLS, BLOCK_VALUES
    )
    lines = [FLOAT_MAGIC, f"bias {float(bias)!r}"]
    for r, c, k in _canonical_rows():
        lines.append(f"{r} {c} {k} {float(w[r, c, k])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_rows(lines: list[str], parse, what: str) -> tuple[np.ndarray, object]:
    if not lines:
        raise ModelFormatError("model file is empty")
    head = lines[1].split() if len(lines) > 1 else []
    if len(head) != 2 or head[0] != "bias":
        raise ModelFormatError("second line must be 'bias <value>'")
    try:
        bias = parse(head[1])
    except ValueError as e:
        raise ModelFormatError(f"bad bias value: {e}") from None
    seen = np.zeros((WINDOW_BLOCK_ROWS, WINDOW_BLOCK_COLS, BLOCK_VALUES), dtype=bool)
    out = np.zeros((WINDOW_BLOCK_ROWS, WINDOW_BLOCK_COLS, BLOCK_VALUES), dtype=np.float64)
    for n, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ModelFormatError(f"line {n}: expected 4 fields, got {len(parts)}")
        try:
            r, c, k = int(parts[0]), int(parts[1]), int(parts[2])
            v = parse(parts[3])
        except ValueError as e:
            raise ModelFormatError(f"line {n}: {e}") from None
        if not (0 <= r < WINDOW_BLOCK_ROWS and 0 <= c < WINDOW_BLOCK_COLS
                and 0 <= k < BLOCK_VALUES):
            raise ModelFormatError(f"line {n}: index ({r},{c},{k}) out of range")
        if seen[r, c, k]:
            raise ModelFormatError(f"line {n}: duplicate coefficient ({r},{c},{k})")
        seen[r, c, k] = True
        out[r, c, k] = v
    if not seen.all():
        missing = int((~seen).sum())
        raise ModelFormatError(f"{what}: {missing} coefficients missing")
    return out, bias


def load_model(path: str | Path, profile: PrecisionProfile = DEFAULT_PROFILE) -> SvmModel:
    """Load a HOGSVM1 quantized model."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != QUANT_MAGIC:
        raise ModelFormatError(f"missing {QUANT_MAGIC} magic")
    out, bias = _parse_rows(lines, int, "quantized model")
    w = out.astype(np.int64)
    limit = profile.svm_coefficient.max_raw
    if np.any(np.abs(w) > limit):
        raise ModelFormatError("coefficient raw magnitude exceeds the format")
    return SvmModel(
        weights_raw=w,
        bias_raw=int(bias),
        coeff_fmt=profile.svm_coefficient,
        bias_fmt=profile.svm_bias,
    )


def load_float_model(path: str | Path) -> tuple[np.ndarray, float]:
    """Load a HOGSVMF1 float model as (weights (3780,), bias)."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != FLOAT_MAGIC:
        raise ModelFormatError(f"missing {FLOAT_MAGIC} magic")
    out, bias = _parse_rows(lines, float, "float model")
    return out.reshape(WINDOW_FEATURES), float(bias)


def sniff_model_format(path: str | Path) -> str:
    """Return the magic on the first line ('HOGSVM1' or 'HOGSVMF1')."""
    with open(path, "r") as f:
        magic = f.readline().strip()
    if magic not in (QUANT_MAGIC, FLOAT_MAGIC):
        raise ModelFormatError(f"unknown model magic {magic!r}")
    return magic
