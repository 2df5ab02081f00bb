"""Frame-level orchestration: fixed-point pipeline, thresholding, greedy NMS.

detect_frame runs the whole fixed-point path on one frame and returns every
window whose score strictly exceeds the threshold, in raster anchor order.
The heavy math runs whole-frame vectorized; the packet-level stream ops
produce bit-identical values (the equivalence is asserted by tests for every
pixels-per-clock setting), so results are invariant in ppc by construction:
every per-pixel op is pointwise and histogram accumulation is exact integer
addition, hence order-free.

NMS is greedy: repeatedly keep the highest-scoring remaining box (ties broken
by raster order) and discard everything overlapping it beyond the IoU
threshold. Box geometry is integral, so IoU comparisons are exact rationals.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .fixedpoint import DEFAULT_PROFILE, PrecisionProfile, SaturationStats, fx_quantize
from .gradient import gradient_field, magnitude_field, orient_field
from .histogram import cell_histogram_grid
from .normalize import block_feature_grid
from .stream import CELL, Frame, GeometryError, VALID_PPC
from .svm import ScoreMap, SvmModel, score_grid

WINDOW_W = 64
WINDOW_H = 128


@dataclass(frozen=True)
class Detection:
    """One detected window; score is the decoded prediction value."""

    x: int
    y: int
    w: int
    h: int
    score: float


@dataclass
class PipelineRun:
    """Everything the fixed-point path produced for one frame."""

    frame: Frame
    mag_raw: np.ndarray
    bin_lo: np.ndarray
    bin_hi: np.ndarray
    hist_grid: np.ndarray
    block_grid: np.ndarray
    score_map: ScoreMap
    stats: SaturationStats
    stage_seconds: dict[str, float] = field(default_factory=dict)


def run_pipeline(
    frame: Frame,
    model: SvmModel,
    profile: PrecisionProfile = DEFAULT_PROFILE,
    stats: SaturationStats | None = None,
) -> PipelineRun:
    """Gradients -> binning -> cell histograms -> block features -> scores."""
    stats = stats if stats is not None else SaturationStats()
    times: dict[str, float] = {}

    t0 = time.perf_counter()
    gx, gy = gradient_field(frame.pixels)
    mag = magnitude_field(gx, gy, profile.gradient_magnitude, stats)
    lo, hi = orient_field(gx, gy)
    t1 = time.perf_counter()
    times["gradient"] = t1 - t0

    hist = cell_histogram_grid(mag, lo, hi, profile.histogram_value,
                               profile.gradient_magnitude, stats)
    t2 = time.perf_counter()
    times["histogram"] = t2 - t1

    blocks = block_feature_grid(hist, profile, stats)
    t3 = time.perf_counter()
    times["normalize"] = t3 - t2

    score_map = score_grid(blocks, model, stats, profile.final_feature)
    t4 = time.perf_counter()
    times["svm"] = t4 - t3

    return PipelineRun(
        frame=frame,
        mag_raw=mag,
        bin_lo=lo,
        bin_hi=hi,
        hist_grid=hist,
        block_grid=blocks,
        score_map=score_map,
        stats=stats,
        stage_seconds=times,
    )


def detect_frame(
    frame: Frame,
    model: SvmModel,
    ppc: int = 4,
    threshold: float = 0.0,
    profile: PrecisionProfile = DEFAULT_PROFILE,
    stats: SaturationStats | None = None,
) -> list[Detection]:
    """All windows scoring strictly above threshold, in raster anchor order.

    ppc is validated against the frame geometry; the detection values are
    identical for every legal setting (see module docstring).
    """
    if ppc not in VALID_PPC:
        raise GeometryError(f"ppc must be one of {VALID_PPC}, got {ppc}")
    if frame.width % ppc:
        raise GeometryError(f"ppc {ppc} does not divide width {frame.width}")
    if frame.width < WINDOW_W or frame.height < WINDOW_H:
        raise GeometryError(
            f"frame {frame.width}x{frame.height} is smaller than one "
            f"{WINDOW_W}x{WINDOW_H} window"
        )
    run = run_pipeline(frame, model, profile, stats)
    return detections_from_scores(run.score_map, threshold)


def detections_from_scores(score_map: ScoreMap, threshold: float = 0.0) -> list[Detection]:
    """Threshold a score map; strict comparison against the quantized threshold."""
    thr_raw = fx_quantize(threshold, score_map.fmt).raw
    scale = score_map.fmt.scale
    out: list[Detection] = []
    rows, cols = np.nonzero(score_map.scores_raw > thr_raw)
    for r, c in zip(rows.tolist(), cols.tolist()):
        out.append(
            Detection(
                x=c * CELL,
                y=r * CELL,
                w=WINDOW_W,
                h=WINDOW_H,
                score=int(score_map.scores_raw[r, c]) / scale,
            )
        )
    return out


def iou(a: Detection, b: Detection) -> Fraction:
    """Exact intersection-over-union of two boxes."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return Fraction(0)
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return Fraction(inter, union)


def nms(detections: list[Detection], iou_threshold: float = 0.5) -> list[Detection]:
    """Greedy non-maximum suppression.

    Candidates are taken in order of descending score, ties broken by raster
    position (smaller y, then smaller x wins); a candidate is kept unless it
    overlaps an already-kept box with IoU strictly above the threshold. The
    result is sorted by descending score (raster order within equal scores).
    """
    order = sorted(detections, key=lambda d: (-d.score, d.y, d.x))
    kept: list[Detection] = []
    for cand in order:
        if all(iou(cand, k) <= iou_threshold for k in kept):
            kept.append(cand)
    return kept


def detections_to_text(detections: list[Detection]) -> str:
    """One detection per line: 'x y w h score' (score via repr round-trip)."""
    return "".join(f"{d.x} {d.y} {d.w} {d.h} {d.score!r}\n" for d in detections)
