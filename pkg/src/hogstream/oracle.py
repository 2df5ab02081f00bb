"""Exact floating-point reference path and fixed-vs-float comparison.

The oracle recomputes every stage the honest way: Euclidean magnitude,
atan2 orientation in [0, 180), bilinear interpolation between the two
adjacent bin centers (20 degrees apart), exact L2-hys normalization with
epsilon = 1e-6 under the square roots, and exact dot-product scoring. It
shares nothing with the fixed-point path except geometry, so differences
between the two measure the hardware approximations and nothing else.

compare_paths runs both paths on one frame with a quantized model and its
float source, and reports per-stage error statistics plus the classification
disagreement rate, serialized as a flat key-value text block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .detector import PipelineRun, run_pipeline
from .fixedpoint import DEFAULT_PROFILE, PrecisionProfile, fx_quantize
from .gradient import N_BINS, BIN_STEP_DEG, FIRST_CENTER_DEG, gradient_field
from .histogram import CELL
from .normalize import BLOCK_VALUES, CLIP_THRESHOLD
from .stream import Frame, GeometryError
from .svm import WINDOW_BLOCK_COLS, WINDOW_BLOCK_ROWS, WINDOW_FEATURES, SvmModel

EPSILON = 1e-6


@dataclass(frozen=True)
class OracleGradient:
    gx: int
    gy: int
    magnitude: float
    theta_deg: float


def oracle_gradient(frame: Frame, x: int, y: int) -> OracleGradient:
    """Exact gradient at one pixel: hypot magnitude, atan2 angle in [0, 180)."""
    px = frame.pixels.astype(np.int32)
    h, w = frame.height, frame.width
    if not (0 <= x < w and 0 <= y < h):
        raise GeometryError(f"pixel ({x},{y}) outside {w}x{h} frame")
    xl, xr = max(x - 1, 0), min(x + 1, w - 1)
    yt, yb = max(y - 1, 0), min(y + 1, h - 1)
    gx = int(px[y, xr]) - int(px[y, xl])
    gy = int(px[yb, x]) - int(px[yt, x])
    m = math.hypot(gx, gy)
    theta = math.degrees(math.atan2(gy, gx)) % 180.0 if (gx or gy) else 0.0
    return OracleGradient(gx=gx, gy=gy, magnitude=m, theta_deg=theta)


def oracle_bin_pair(gx: int, gy: int) -> tuple[int, int]:
    """Adjacent-bin pair from the exact angle, same conventions as the datapath.

    Zero gradient maps to (0, 1) like the fixed path (zero mass, unobservable).
    """
    if gx == 0 and gy == 0:
        return (0, 1)
    theta = math.degrees(math.atan2(gy, gx)) % 180.0
    lo = math.floor((theta - FIRST_CENTER_DEG) / BIN_STEP_DEG) % N_BINS
    return lo, (lo + 1) % N_BINS


def _interp_weights(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """lo bin, hi bin, and the fraction of mass going to hi."""
    u = (theta - FIRST_CENTER_DEG) / BIN_STEP_DEG
    k = np.floor(u)
    frac = u - k
    lo = (k.astype(np.int64)) % N_BINS
    hi = (lo + 1) % N_BINS
    return lo, hi, frac


def oracle_cell_histogram(frame: Frame, cell_row: int, cell_col: int) -> np.ndarray:
    """Exact 9-bin histogram of one 8x8 cell with bilinear bin interpolation."""
    rows = frame.height // CELL
    cols = frame.width // CELL
    if not (0 <= cell_row < rows and 0 <= cell_col < cols):
        raise GeometryError(f"cell ({cell_row},{cell_col}) outside {rows}x{cols} grid")
    bins = np.zeros(N_BINS, dtype=np.float64)
    for y in range(cell_row * CELL, (cell_row + 1) * CELL):
        for x in range(cell_col * CELL, (cell_col + 1) * CELL):
            g = oracle_gradient(frame, x, y)
            if g.magnitude == 0.0:
                continue
            u = (g.theta_deg - FIRST_CENTER_DEG) / BIN_STEP_DEG
            k = math.floor(u)
            frac = u - k
            lo = k % N_BINS
            bins[lo] += g.magnitude * (1.0 - frac)
            bins[(lo + 1) % N_BINS] += g.magnitude * frac
    return bins


def oracle_block_normalize(cell_hists: np.ndarray, eps: float = EPSILON) -> np.ndarray:
    """Exact L2 -> clip at 0.2 -> L2 on one block's 4 cell histograms.

    cell_hists is (4, 9) in block order [cell(i,j), cell(i+1,j), cell(i,j+1),
    cell(i+1,j+1)]; returns the 36 normalized values.
    """
    f = np.asarray(cell_hists, dtype=np.float64).reshape(BLOCK_VALUES)
    f_l2 = f / math.sqrt(float(np.dot(f, f)) + eps * eps)
    f_th = np.minimum(f_l2, CLIP_THRESHOLD)
    return f_th / math.sqrt(float(np.dot(f_th, f_th)) + eps * eps)


def oracle_score(features: np.ndarray, weights: np.ndarray, bias: float) -> float:
    """Exact window score: dot(weights, features) + bias."""
    f = np.asarray(features, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if f.shape != (WINDOW_FEATURES,) or w.shape != (WINDOW_FEATURES,):
        raise GeometryError(f"expected {WINDOW_FEATURES}-value vectors, "
                            f"got {f.shape} and {w.shape}")
    return float(np.dot(w, f) + bias)


@dataclass
class ReferenceRun:
    """Everything the float path produced for one frame."""

    magnitude: np.ndarray
    theta_deg: np.ndarray
    bin_lo: np.ndarray
    bin_hi: np.ndarray
    hist_grid: np.ndarray
    block_grid: np.ndarray
    scores: np.ndarray


def reference_run(frame: Frame, weights: np.ndarray | None = None,
                  bias: float = 0.0) -> ReferenceRun:
    """Whole-frame float path; scores are computed only if weights are given."""
    gx, gy = gradient_field(frame.pixels)
    m = np.hypot(gx, gy)
    theta = np.degrees(np.arctan2(gy, gx)) % 180.0
    lo, hi, frac = _interp_weights(theta)
    zero = (gx == 0) & (gy == 0)
    lo = np.where(zero, 0, lo)
    hi = np.where(zero, 1, hi)

    rows, cols = frame.height // CELL, frame.width // CELL
    grid = np.zeros((rows, cols, N_BINS), dtype=np.float64)
    mass_lo = m * (1.0 - frac)
    mass_hi = m * frac
    for k in range(N_BINS):
        sel = mass_lo * (lo == k) + mass_hi * (hi == k)
        grid[:, :, k] = sel.reshape(rows, CELL, cols, CELL).sum(axis=(1, 3))

    if rows < 2 or cols < 2:
        raise GeometryError(f"cell grid {rows}x{cols} is too small to form a block")
    f4 = np.concatenate((grid[:-1, :-1], grid[1:, :-1], grid[:-1, 1:], grid[1:, 1:]),
                        axis=2)
    sq = (f4 * f4).sum(axis=2)
    f_l2 = f4 / np.sqrt(sq + EPSILON * EPSILON)[:, :, None]
    f_th = np.minimum(f_l2, CLIP_THRESHOLD)
    sq2 = (f_th * f_th).sum(axis=2)
    blocks = f_th / np.sqrt(sq2 + EPSILON * EPSILON)[:, :, None]

    scores = np.zeros((0, 0), dtype=np.float64)
    if weights is not None:
        br, bc = blocks.shape[0], blocks.shape[1]
        ar = br - (WINDOW_BLOCK_ROWS - 1)
        ac = bc - (WINDOW_BLOCK_COLS - 1)
        if ar > 0 and ac > 0:
            wmat = np.asarray(weights, dtype=np.float64).reshape(
                WINDOW_BLOCK_ROWS * WINDOW_BLOCK_COLS, BLOCK_VALUES
            )
            dots = blocks.reshape(br * bc, BLOCK_VALUES) @ wmat.T
            dots = dots.reshape(br, bc, -1)
            scores = np.full((ar, ac), float(bias), dtype=np.float64)
            for r in range(WINDOW_BLOCK_ROWS):
                for c in range(WINDOW_BLOCK_COLS):
                    scores = scores + dots[r : r + ar, c : c + ac,
                                           r * WINDOW_BLOCK_COLS + c]
    return ReferenceRun(
        magnitude=m,
        theta_deg=theta,
        bin_lo=lo.astype(np.uint8),
        bin_hi=hi.astype(np.uint8),
        hist_grid=grid,
        block_grid=blocks,
        scores=scores,
    )


def window_feature_grid(block_grid: np.ndarray) -> np.ndarray:
    """Gather per-anchor 3780-value window features from a block grid."""
    br, bc = block_grid.shape[0], block_grid.shape[1]
    ar = br - (WINDOW_BLOCK_ROWS - 1)
    ac = bc - (WINDOW_BLOCK_COLS - 1)
    if ar <= 0 or ac <= 0:
        return np.zeros((0, 0, WINDOW_FEATURES), dtype=block_grid.dtype)
    out = np.empty((ar, ac, WINDOW_FEATURES), dtype=block_grid.dtype)
    for r in range(WINDOW_BLOCK_ROWS):
        for c in range(WINDOW_BLOCK_COLS):
            k = (r * WINDOW_BLOCK_COLS + c) * BLOCK_VALUES
            out[:, :, k : k + BLOCK_VALUES] = block_grid[r : r + ar, c : c + ac]
    return out


def oracle_window_feature(frame: Frame, anchor_row: int = 0, anchor_col: int = 0) -> np.ndarray:
    """Exact 3780-value feature of the window anchored at the given cell."""
    ref = reference_run(frame)
    grid = window_feature_grid(ref.block_grid)
    if not (0 <= anchor_row < grid.shape[0] and 0 <= anchor_col < grid.shape[1]):
        raise GeometryError(f"anchor ({anchor_row},{anchor_col}) outside "
                            f"{grid.shape[0]}x{grid.shape[1]} grid")
    return grid[anchor_row, anchor_col]


@dataclass
class ErrorReport:
    """Per-stage error statistics of the fixed path against the oracle."""

    pixels: int
    blocks: int
    anchors: int
    magnitude_max_abs_err: float
    magnitude_mean_abs_err: float
    bin_pair_disagreement_rate: float
    block_feature_max_abs_err: float
    block_feature_mean_abs_err: float
    score_max_abs_err: float
    score_mean_abs_err: float
    classification_disagreements: int
    classification_disagreement_rate: float

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} {v!r}" if isinstance(v, float) else f"{f.name} {v}")
        return "\n".join(lines) + "\n"


def compare_paths(
    frame: Frame,
    model: SvmModel,
    float_weights: np.ndarray,
    float_bias: float,
    threshold: float = 0.0,
    profile: PrecisionProfile = DEFAULT_PROFILE,
    fixed_run: PipelineRun | None = None,
) -> ErrorReport:
    """Run both paths on one frame and measure every approximation.

    The quantized model should come from the given float source so the score
    gap reflects the datapath plus weight quantization. Zero-magnitude pixels
    are excluded from the bin-pair rate (their pair carries no mass).
    """
    fixed = fixed_run if fixed_run is not None else run_pipeline(frame, model, profile)
    ref = reference_run(frame, float_weights, float_bias)

    mag_fixed = fixed.mag_raw / profile.gradient_magnitude.scale
    mag_err = np.abs(mag_fixed - ref.magnitude)

    carrying = ref.magnitude > 0
    pair_diff = ((fixed.bin_lo != ref.bin_lo) | (fixed.bin_hi != ref.bin_hi)) & carrying
    n_carrying = int(carrying.sum())
    pair_rate = float(pair_diff.sum() / n_carrying) if n_carrying else 0.0

    blk_fixed = fixed.block_grid / profile.final_feature.scale
    blk_err = np.abs(blk_fixed - ref.block_grid)

    score_fixed = fixed.score_map.decode()
    score_err = np.abs(score_fixed - ref.scores)

    thr_raw = fx_quantize(threshold, fixed.score_map.fmt).raw
    fixed_pos = fixed.score_map.scores_raw > thr_raw
    ref_pos = ref.scores > threshold
    disagree = int((fixed_pos != ref_pos).sum())
    n_anchors = int(ref.scores.size)

    return ErrorReport(
        pixels=int(ref.magnitude.size),
        blocks=int(ref.block_grid.shape[0] * ref.block_grid.shape[1]),
        anchors=n_anchors,
        magnitude_max_abs_err=float(mag_err.max()),
        magnitude_mean_abs_err=float(mag_err.mean()),
        bin_pair_disagreement_rate=pair_rate,
        block_feature_max_abs_err=float(blk_err.max()),
        block_feature_mean_abs_err=float(blk_err.mean()),
        score_max_abs_err=float(score_err.max()) if score_err.size else 0.0,
        score_mean_abs_err=float(score_err.mean()) if score_err.size else 0.0,
        classification_disagreements=disagree,
        classification_disagreement_rate=float(disagree / n_anchors) if n_anchors else 0.0,
    )
