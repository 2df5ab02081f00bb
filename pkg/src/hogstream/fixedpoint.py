"""Signed fixed-point arithmetic with explicit quantization and overflow policy.

Every value in the detector datapath is a two's-complement integer scaled by a
power of two. The policy, applied uniformly:

* quantization of a real: multiply by 2**fraction, truncate toward minus
  infinity, then saturate into the target width;
* narrowing between fractions: arithmetic right shift (again truncation
  toward minus infinity), widening is an exact left shift;
* overflow: saturate, never wrap. Saturation events can be recorded through a
  ``SaturationStats`` sink so callers may assert that nominal data never clips.

All raw-level helpers also exist in array form (numpy int64) so whole-frame
stages can run vectorized while staying bit-identical to the scalar ops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np


class FormatMismatchError(ValueError):
    """Raised when an operation requires operands in the same format."""


@dataclass(frozen=True)
class FxFormat:
    """Width/fraction pair describing a signed fixed-point representation.

    ``width`` counts all bits including the sign, ``fraction`` of them sit
    below the binary point. Raw integers live in [-2**(width-1), 2**(width-1)-1]
    and decode to raw * 2**-fraction.
    """

    width: int
    fraction: int

    def __post_init__(self) -> None:
        if not 1 <= self.width <= 64:
            raise ValueError(f"width must be in 1..64, got {self.width}")
        if not 0 <= self.fraction < self.width:
            raise ValueError(
                f"fraction must be in 0..{self.width - 1}, got {self.fraction}"
            )

    @property
    def min_raw(self) -> int:
        return -(1 << (self.width - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.width - 1)) - 1

    @property
    def scale(self) -> int:
        return 1 << self.fraction

    @property
    def min_value(self) -> float:
        return self.min_raw / self.scale

    @property
    def max_value(self) -> float:
        return self.max_raw / self.scale

    @property
    def lsb(self) -> float:
        return 1.0 / self.scale

    def __str__(self) -> str:
        return f"({self.width},{self.fraction})"


@dataclass(frozen=True)
class Fx:
    """A raw two's-complement integer together with its format."""

    raw: int
    format: FxFormat

    def __post_init__(self) -> None:
        if not self.format.min_raw <= self.raw <= self.format.max_raw:
            raise ValueError(f"raw {self.raw} does not fit {self.format}")

    @property
    def value(self) -> float:
        # all profile formats are <= 42 bits wide, so the decode is exact in float64
        return self.raw / self.format.scale

    def __str__(self) -> str:
        return f"{self.value}{self.format}"


class SaturationStats:
    """Counts saturation events per labeled stage.

    Missing stages read as zero, so tests can assert ``stats["svm"] == 0``
    without caring whether the stage ever reported.
    """

    def __init__(self) -> None:
        self.counts: dict[str, int] = {}

    def record(self, stage: str, n: int = 1) -> None:
        if n:
            self.counts[stage] = self.counts.get(stage, 0) + int(n)

    def __getitem__(self, stage: str) -> int:
        return self.counts.get(stage, 0)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __repr__(self) -> str:
        return f"SaturationStats({self.counts})"


def saturate_raw(
    raw: int, fmt: FxFormat, stats: SaturationStats | None = None, stage: str = "saturate"
) -> int:
    """Clamp a raw integer into the representable range of ``fmt``."""
    if raw > fmt.max_raw:
        if stats is not None:
            stats.record(stage)
        return fmt.max_raw
    if raw < fmt.min_raw:
        if stats is not None:
            stats.record(stage)
        return fmt.min_raw
    return raw


def requantize_raw(
    raw: int,
    fraction: int,
    fmt: FxFormat,
    stats: SaturationStats | None = None,
    stage: str = "requantize",
) -> int:
    """Move a raw integer carrying ``fraction`` fractional bits into ``fmt``.

    Narrowing truncates toward minus infinity (arithmetic shift), widening is
    exact; the result is saturated into ``fmt``.
    """
    if fraction > fmt.fraction:
        raw >>= fraction - fmt.fraction
    elif fraction < fmt.fraction:
        raw <<= fmt.fraction - fraction
    return saturate_raw(raw, fmt, stats, stage)


def fx_quantize(
    value: float,
    fmt: FxFormat,
    stats: SaturationStats | None = None,
    stage: str = "quantize",
) -> Fx:
    """Encode a real value: floor(value * 2**fraction), then saturate."""
    raw = math.floor(value * fmt.scale)
    return Fx(saturate_raw(raw, fmt, stats, stage), fmt)


def fx_add(
    a: Fx,
    b: Fx,
    out_fmt: FxFormat,
    stats: SaturationStats | None = None,
    stage: str = "add",
) -> Fx:
    """Exact integer sum at the shared fraction, requantized into ``out_fmt``."""
    if a.format != b.format:
        raise FormatMismatchError(f"fx_add operands differ: {a.format} vs {b.format}")
    raw = requantize_raw(a.raw + b.raw, a.format.fraction, out_fmt, stats, stage)
    return Fx(raw, out_fmt)


def fx_mul(
    a: Fx,
    b: Fx,
    out_fmt: FxFormat,
    stats: SaturationStats | None = None,
    stage: str = "mul",
) -> Fx:
    """Exact integer product at fraction f_a + f_b, requantized into ``out_fmt``.

    Exactly one truncate+saturate step happens, on the full-precision product.
    """
    raw = requantize_raw(
        a.raw * b.raw, a.format.fraction + b.format.fraction, out_fmt, stats, stage
    )
    return Fx(raw, out_fmt)


def fx_shr(a: Fx, n: int) -> Fx:
    """Arithmetic right shift of the raw value; format unchanged."""
    if n < 0:
        raise ValueError(f"shift count must be non-negative, got {n}")
    return Fx(a.raw >> n, a.format)


# ---------------------------------------------------------------------------
# array variants (int64 raws), bit-identical to the scalar ops above


def saturate_array(
    raw: np.ndarray,
    fmt: FxFormat,
    stats: SaturationStats | None = None,
    stage: str = "saturate",
) -> np.ndarray:
    """Vector form of saturate_raw; counts every clipped element."""
    if stats is not None:
        n = int(np.count_nonzero(raw > fmt.max_raw)) + int(
            np.count_nonzero(raw < fmt.min_raw)
        )
        stats.record(stage, n)
    return np.clip(raw, fmt.min_raw, fmt.max_raw)


def requantize_array(
    raw: np.ndarray,
    fraction: int,
    fmt: FxFormat,
    stats: SaturationStats | None = None,
    stage: str = "requantize",
) -> np.ndarray:
    """Vector form of requantize_raw (arithmetic shifts are floor for int64)."""
    if fraction > fmt.fraction:
        raw = raw >> (fraction - fmt.fraction)
    elif fraction < fmt.fraction:
        raw = raw << (fmt.fraction - fraction)
    return saturate_array(raw, fmt, stats, stage)


def quantize_array(
    values: np.ndarray,
    fmt: FxFormat,
    stats: SaturationStats | None = None,
    stage: str = "quantize",
) -> np.ndarray:
    """Vector form of fx_quantize: floor then saturate, returns int64 raws."""
    raw = np.floor(np.asarray(values, dtype=np.float64) * fmt.scale).astype(np.int64)
    return saturate_array(raw, fmt, stats, stage)


@dataclass(frozen=True)
class PrecisionProfile:
    """Per-stage fixed-point formats of the detection pipeline.

    The defaults are the shipped datapath widths; tests pin them, and every
    stage takes its format from here rather than hard-coding widths.
    ``histogram_bin_number`` documents the 4-bit bin-index field; bin indices
    are carried as plain ints 0..8 (the value 8 exceeds the signed 4-bit max,
    the hardware field is effectively unsigned).
    """

    gradient_magnitude: FxFormat = field(default=FxFormat(11, 3))
    histogram_bin_number: FxFormat = field(default=FxFormat(4, 0))
    histogram_value: FxFormat = field(default=FxFormat(18, 4))
    prepare_first_norm: FxFormat = field(default=FxFormat(42, 8))
    first_inv_sqrt: FxFormat = field(default=FxFormat(24, 18))
    feature_after_first_norm: FxFormat = field(default=FxFormat(10, 9))
    second_inv_sqrt: FxFormat = field(default=FxFormat(22, 16))
    final_feature: FxFormat = field(default=FxFormat(10, 9))
    svm_coefficient: FxFormat = field(default=FxFormat(11, 10))
    svm_bias: FxFormat = field(default=FxFormat(33, 19))
    svm_prediction: FxFormat = field(default=FxFormat(33, 19))

    def stages(self) -> dict[str, FxFormat]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT_PROFILE = PrecisionProfile()
