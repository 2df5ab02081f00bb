"""Fixed-point core: quantization, arithmetic, saturation policy, profile."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hogstream.fixedpoint import (
    DEFAULT_PROFILE,
    FormatMismatchError,
    Fx,
    FxFormat,
    PrecisionProfile,
    SaturationStats,
    fx_add,
    fx_mul,
    fx_quantize,
    fx_shr,
    quantize_array,
    requantize_array,
    requantize_raw,
    saturate_array,
    saturate_raw,
)

F10_9 = FxFormat(10, 9)
F11_3 = FxFormat(11, 3)


def test_format_ranges():
    assert F10_9.min_raw == -512 and F10_9.max_raw == 511
    assert F10_9.scale == 512
    assert F11_3.max_value == 127.875
    assert str(F11_3) == "(11,3)"


def test_format_validation():
    with pytest.raises(ValueError):
        FxFormat(0, 0)
    with pytest.raises(ValueError):
        FxFormat(8, 8)  # fraction must leave room for the sign bit
    with pytest.raises(ValueError):
        FxFormat(65, 2)


def test_fx_range_checked():
    with pytest.raises(ValueError):
        Fx(512, F10_9)
    assert Fx(-512, F10_9).value == -1.0


def test_quantize_examples():
    q = fx_quantize(0.2, F10_9)
    assert q.raw == 102 and q.value == 0.19921875
    assert fx_quantize(-0.2, F10_9).raw == -103      # floor, not round
    assert fx_quantize(1000.0, F11_3).value == 127.875  # saturates at the max


def test_quantize_saturation_counted():
    stats = SaturationStats()
    fx_quantize(1000.0, F11_3, stats, "mag")
    fx_quantize(-1000.0, F11_3, stats, "mag")
    fx_quantize(1.0, F11_3, stats, "mag")
    assert stats["mag"] == 2
    assert stats["other"] == 0
    assert stats.total == 2


def test_mul_example():
    f = Fx(102, F10_9)  # 0.19921875
    r = fx_mul(f, f, F10_9)
    assert r.raw == 20  # floor(102*102 / 512)


def test_mul_truncates_toward_minus_inf():
    a = Fx(-102, F10_9)
    b = Fx(102, F10_9)
    r = fx_mul(a, b, F10_9)
    assert r.raw == math.floor(-102 * 102 / 512)  # -21, not -20


def test_add_format_mismatch():
    with pytest.raises(FormatMismatchError):
        fx_add(Fx(1, F10_9), Fx(1, F11_3), F10_9)


def test_shr_is_arithmetic():
    assert fx_shr(Fx(-5, F11_3), 1).raw == -3
    assert fx_shr(Fx(5, F11_3), 1).raw == 2
    with pytest.raises(ValueError):
        fx_shr(Fx(5, F11_3), -1)


def test_widening_requantize_is_exact():
    raw = requantize_raw(5, 3, FxFormat(18, 4))
    assert raw == 10


formats = (
    st.tuples(
        st.integers(min_value=2, max_value=48),
        st.integers(min_value=0, max_value=20),
    )
    .filter(lambda wf: wf[1] < wf[0])
    .map(lambda wf: FxFormat(width=wf[0], fraction=wf[1]))
)


@st.composite
def fx_values(draw, fmt=None):
    f = draw(formats) if fmt is None else fmt
    raw = draw(st.integers(min_value=f.min_raw, max_value=f.max_raw))
    return Fx(raw, f)


@given(fx_values())
def test_roundtrip_exact_values(v):
    # every representable value quantizes back to itself
    assert fx_quantize(v.value, v.format).raw == v.raw


@given(st.data())
@settings(max_examples=200)
def test_mul_matches_bigint_oracle(data):
    a = data.draw(fx_values())
    b = data.draw(fx_values())
    out = data.draw(formats)
    got = fx_mul(a, b, out)
    # independent arbitrary-precision recomputation
    prod = a.raw * b.raw
    frac = a.format.fraction + b.format.fraction
    if frac > out.fraction:
        expect = prod >> (frac - out.fraction)
    else:
        expect = prod << (out.fraction - frac)
    expect = max(out.min_raw, min(out.max_raw, expect))
    assert got.raw == expect
    # the shift really is floor division
    assert prod >> 1 == math.floor(Fraction(prod, 2))


@given(st.data())
@settings(max_examples=200)
def test_add_matches_bigint_oracle(data):
    fmt = data.draw(formats)
    a = data.draw(fx_values(fmt=fmt))
    b = data.draw(fx_values(fmt=fmt))
    out = data.draw(formats)
    got = fx_add(a, b, out)
    s = a.raw + b.raw
    if fmt.fraction > out.fraction:
        expect = s >> (fmt.fraction - out.fraction)
    else:
        expect = s << (out.fraction - fmt.fraction)
    expect = max(out.min_raw, min(out.max_raw, expect))
    assert got.raw == expect


@given(st.data())
@settings(max_examples=200)
def test_quantize_matches_fraction_oracle(data):
    fmt = data.draw(formats)
    num = data.draw(st.integers(min_value=-(10**6), max_value=10**6))
    den = data.draw(st.integers(min_value=1, max_value=997))
    value = num / den
    got = fx_quantize(value, fmt)
    expect = math.floor(Fraction(value) * fmt.scale)  # exact: float -> Fraction is exact
    expect = max(fmt.min_raw, min(fmt.max_raw, expect))
    assert got.raw == expect


def test_array_ops_match_scalar():
    rng = np.random.default_rng(7)
    fmt = FxFormat(12, 5)
    raws = rng.integers(-(1 << 15), 1 << 15, size=300)
    out = saturate_array(raws.copy(), fmt)
    assert [saturate_raw(int(r), fmt) for r in raws] == out.tolist()

    req = requantize_array(raws.copy(), 8, fmt)
    assert [requantize_raw(int(r), 8, fmt) for r in raws] == req.tolist()

    vals = rng.uniform(-100, 100, size=300)
    qa = quantize_array(vals, fmt)
    assert [fx_quantize(float(v), fmt).raw for v in vals] == qa.tolist()


def test_array_saturation_counts():
    stats = SaturationStats()
    saturate_array(np.array([10**6, -(10**6), 0]), F11_3, stats, "x")
    assert stats["x"] == 2


def test_profile_stage_formats():
    p = DEFAULT_PROFILE
    expected = {
        "gradient_magnitude": (11, 3),
        "histogram_bin_number": (4, 0),
        "histogram_value": (18, 4),
        "prepare_first_norm": (42, 8),
        "first_inv_sqrt": (24, 18),
        "feature_after_first_norm": (10, 9),
        "second_inv_sqrt": (22, 16),
        "final_feature": (10, 9),
        "svm_coefficient": (11, 10),
        "svm_bias": (33, 19),
        "svm_prediction": (33, 19),
    }
    got = {k: (v.width, v.fraction) for k, v in p.stages().items()}
    assert got == expected
    assert PrecisionProfile() == p
