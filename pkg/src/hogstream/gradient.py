"""Per-pixel gradients, shift-add magnitude, adjacent-bin orientation lookup.

Gradients come from the 1-D central difference masks [-1, 0, 1] applied
horizontally and vertically. The Euclidean magnitude is replaced by the
shift-add approximation max(0.875a + 0.5b, a) with a = max(|gx|,|gy|),
b = min(|gx|,|gy|); at 3 fractional bits the shifts are exact for integer
inputs, so the only error is the approximation itself (within [-3.2%, +0.9%]
of the true magnitude, zero on axis-aligned gradients).

Orientation is never computed as an angle. The unsigned orientation in
[0, 180) is classified directly into its pair of adjacent histogram bins by
comparing gy against gx * tan(boundary) with integer constants. Bin centers
sit at 10 + 20k degrees (k = 0..8); the pair for theta in [c_k, c_{k+1}) is
(k, k+1), wrapping to (8, 0) below 10 and at or above 170 degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .fixedpoint import DEFAULT_PROFILE, Fx, FxFormat, SaturationStats, saturate_array, saturate_raw
from .stream import ContextPacket

N_BINS = 9
BIN_STEP_DEG = 20.0
FIRST_CENTER_DEG = 10.0

# Boundary tangents tan(10), tan(30), tan(50), tan(70) at 16 fractional bits,
# floored. Floored constants make ">= boundary" and "> boundary" both equal to
# the strict integer comparison (gy << 16) > gx * T, and 16 bits are enough
# that no gradient ratio with |gx|,|gy| <= 255 falls inside the rounding gap
# (verified exhaustively against atan2 in the tests).
TAN_FRACTION_BITS = 16
TAN_BOUNDARIES = tuple(
    math.floor(math.tan(math.radians(FIRST_CENTER_DEG + BIN_STEP_DEG * k))
               * (1 << TAN_FRACTION_BITS))
    for k in range(4)
)

# pair tables indexed by how many boundaries (gy/gx) strictly exceeds
_Q1_PAIRS = ((8, 0), (0, 1), (1, 2), (2, 3), (3, 4))
_Q2_PAIRS = ((8, 0), (7, 8), (6, 7), (5, 6), (4, 5))


@dataclass(frozen=True)
class GradientPair:
    gx: int
    gy: int


@dataclass(frozen=True)
class BinnedGradient:
    """Quantized magnitude plus the two adjacent orientation bins."""

    magnitude: Fx
    bin_lo: int
    bin_hi: int

    def __post_init__(self) -> None:
        if not (0 <= self.bin_lo < N_BINS and self.bin_hi == (self.bin_lo + 1) % N_BINS):
            raise ValueError(f"bad bin pair ({self.bin_lo}, {self.bin_hi})")


def compute_gradients(ctx: tuple[tuple[int, int, int], ...]) -> GradientPair:
    """Central differences over one 3x3 context: gx = right - left, gy = bottom - top."""
    return GradientPair(gx=ctx[1][2] - ctx[1][0], gy=ctx[2][1] - ctx[0][1])


def magnitude_approx_raw(gx: int, gy: int) -> int:
    """Shift-add magnitude, returned as the raw integer at 3 fractional bits.

    Computed exactly as the datapath does: at 3 fractional bits,
    0.875a = a - (a >> 3) and 0.5b = b >> 1 are exact for integer gradients,
    so this equals max(0.875a + 0.5b, a) with no rounding error. No width
    limit is applied here; encoding into the magnitude format (and any
    saturation) happens in magnitude_approx.
    """
    a = abs(gx)
    b = abs(gy)
    if a < b:
        a, b = b, a
    ra = a << 3
    rb = b << 3
    return max(ra - (ra >> 3) + (rb >> 1), ra)


def magnitude_approx(
    gx: int,
    gy: int,
    fmt: FxFormat = DEFAULT_PROFILE.gradient_magnitude,
    stats: SaturationStats | None = None,
) -> Fx:
    """Shift-add magnitude encoded into the magnitude format (saturating)."""
    return Fx(saturate_raw(magnitude_approx_raw(gx, gy), fmt, stats, "magnitude"), fmt)


def orient_bin_pair(gx: int, gy: int) -> tuple[int, int]:
    """Adjacent-bin pair of the unsigned orientation of (gx, gy).

    Equivalent, bit for bit, to computing theta = atan2(gy, gx) mod 180 and
    locating it among the bin centers; zero gradient returns (0, 1) (its
    contribution is zero, so the choice is unobservable).
    """
    if gx == 0 and gy == 0:
        return (0, 1)
    if gy < 0 or (gy == 0 and gx < 0):
        gx, gy = -gx, -gy          # unsigned orientation: (gx,gy) ~ (-gx,-gy)
    if gy == 0:
        return (8, 0)              # theta = 0
    if gx == 0:
        return (4, 5)              # theta = 90
    lhs = gy << TAN_FRACTION_BITS
    if gx > 0:
        hits = 0
        for t in TAN_BOUNDARIES:
            if lhs > gx * t:
                hits += 1
        return _Q1_PAIRS[hits]
    a = -gx                        # theta in (90, 180): classify 180 - theta
    hits = 0
    for t in TAN_BOUNDARIES:
        if lhs > a * t:
            hits += 1
    return _Q2_PAIRS[hits]


def binned_stream(
    contexts: Iterable[ContextPacket],
    fmt: FxFormat = DEFAULT_PROFILE.gradient_magnitude,
    stats: SaturationStats | None = None,
) -> Iterator[tuple[BinnedGradient, ...]]:
    """Map a context stream to per-lane BinnedGradient packets."""
    for cp in contexts:
        out = []
        for ctx in cp.contexts:
            g = compute_gradients(ctx)
            lo, hi = orient_bin_pair(g.gx, g.gy)
            out.append(BinnedGradient(magnitude_approx(g.gx, g.gy, fmt, stats), lo, hi))
        yield tuple(out)


# ---------------------------------------------------------------------------
# whole-frame array path (bit-identical to the scalar ops; tests assert it)


def gradient_field(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradients of a full frame with edge replication."""
    p = np.pad(pixels.astype(np.int32), 1, mode="edge")
    gx = p[1:-1, 2:] - p[1:-1, :-2]
    gy = p[2:, 1:-1] - p[:-2, 1:-1]
    return gx, gy


def magnitude_field(
    gx: np.ndarray,
    gy: np.ndarray,
    fmt: FxFormat = DEFAULT_PROFILE.gradient_magnitude,
    stats: SaturationStats | None = None,
) -> np.ndarray:
    """Array form of magnitude_approx; returns saturated raw values (int32)."""
    a = np.maximum(np.abs(gx), np.abs(gy)).astype(np.int32)
    b = np.minimum(np.abs(gx), np.abs(gy)).astype(np.int32)
    ra = a << 3
    raw = np.maximum(ra - (ra >> 3) + ((b << 3) >> 1), ra)
    return saturate_array(raw, fmt, stats, "magnitude").astype(np.int32)


def orient_field(gx: np.ndarray, gy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Array form of orient_bin_pair; returns (bin_lo, bin_hi) as uint8."""
    gx = gx.astype(np.int64)
    gy = gy.astype(np.int64)
    flip = (gy < 0) | ((gy == 0) & (gx < 0))
    sx = np.where(flip, -gx, gx)
    sy = np.where(flip, -gy, gy)
    lhs = sy << TAN_FRACTION_BITS
    mag_x = np.abs(sx)
    hits = np.zeros(gx.shape, dtype=np.int64)
    for t in TAN_BOUNDARIES:
        hits += lhs > mag_x * t
    q1 = np.array([p[0] for p in _Q1_PAIRS], dtype=np.uint8)
    q2 = np.array([p[0] for p in _Q2_PAIRS], dtype=np.uint8)
    lo = np.where(sx > 0, q1[hits], q2[hits]).astype(np.uint8)
    lo = np.where((sx == 0) & (sy > 0), 4, lo).astype(np.uint8)   # theta = 90
    lo = np.where(sy == 0, 8, lo).astype(np.uint8)                # theta = 0
    lo = np.where((gx == 0) & (gy == 0), 0, lo).astype(np.uint8)  # zero gradient
    hi = ((lo + 1) % N_BINS).astype(np.uint8)
    return lo, hi
