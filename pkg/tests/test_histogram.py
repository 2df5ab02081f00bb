"""Cell histogram accumulation: split rule, emission order, mass conservation."""

import numpy as np
import pytest

from hogstream.fixedpoint import DEFAULT_PROFILE, Fx, SaturationStats
from hogstream.gradient import (
    BinnedGradient,
    binned_stream,
    gradient_field,
    magnitude_approx,
    magnitude_field,
    orient_bin_pair,
    orient_field,
)
from hogstream.histogram import (
    CellHistogram,
    accumulate_cells,
    cell_histogram_grid,
    dump_cells,
    split_contribution,
)
from hogstream.stream import (
    VALID_PPC,
    Frame,
    GeometryError,
    StreamProtocolError,
    context_stream,
    pack_frame,
)

MAG_FMT = DEFAULT_PROFILE.gradient_magnitude
HIST_FMT = DEFAULT_PROFILE.histogram_value


def binned_packets(frame, ppc):
    return binned_stream(context_stream(pack_frame(frame, ppc), width=frame.width))


def test_split_truncates_once():
    bg = BinnedGradient(Fx(5, MAG_FMT), 0, 1)
    a, b = split_contribution(bg)
    assert a.raw == b.raw == 2
    assert a.format == MAG_FMT


def test_cell_histogram_validation():
    with pytest.raises(ValueError):
        CellHistogram(0, 0, bins=(Fx(0, HIST_FMT),) * 8)


def test_single_cell_constant_gradient():
    # 64 identical pixels with magnitude raw 8 (1.0) and pair (0,1):
    # each bin gets 64 * ((8>>1) widened to fraction 4) = 64*8 = 512 raw (32.0)
    bg = BinnedGradient(Fx(8, MAG_FMT), 0, 1)
    pkts = [[bg] * 8 for _ in range(8)]
    cells = list(accumulate_cells(pkts, width=8))
    assert len(cells) == 1
    c = cells[0]
    assert (c.cell_row, c.cell_col) == (0, 0)
    raws = [b.raw for b in c.bins]
    assert raws == [512, 512, 0, 0, 0, 0, 0, 0, 0]
    assert c.bins[0].value == 32.0


def test_wrap_pair_hits_bins_8_and_0():
    bg = BinnedGradient(Fx(16, MAG_FMT), 8, 0)
    pkts = [[bg] * 8 for _ in range(8)]
    (c,) = accumulate_cells(pkts, width=8)
    raws = [b.raw for b in c.bins]
    assert raws[8] == raws[0] == 64 * 16 and sum(raws) == raws[0] + raws[8]


def test_emission_order_raster():
    rng = np.random.default_rng(31)
    f = Frame.from_array(rng.integers(0, 256, size=(16, 24), dtype=np.uint8))
    coords = [(c.cell_row, c.cell_col) for c in accumulate_cells(binned_packets(f, 4), f.width)]
    assert coords == [(r, c) for r in range(2) for c in range(3)]


def naive_cell_grid(px):
    """Independent double-loop reference built from the scalar ops."""
    h, w = px.shape
    p = np.pad(px.astype(int), 1, mode="edge")
    grid = [[[0] * 9 for _ in range(w // 8)] for _ in range(h // 8)]
    for y in range(h):
        for x in range(w):
            gx = int(p[y + 1, x + 2]) - int(p[y + 1, x])
            gy = int(p[y + 2, x + 1]) - int(p[y, x + 1])
            lo, hi = orient_bin_pair(gx, gy)
            half = (magnitude_approx(gx, gy).raw >> 1) << 1  # widen 3 -> 4 frac bits
            grid[y // 8][x // 8][lo] += half
            grid[y // 8][x // 8][hi] += half
    return grid


def test_matches_naive_reference_all_ppc():
    rng = np.random.default_rng(32)
    for w, h in [(8, 8), (24, 16), (64, 32)]:
        px = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
        want = naive_cell_grid(px)
        f = Frame.from_array(px)
        for ppc in VALID_PPC:
            got = {}
            for c in accumulate_cells(binned_packets(f, ppc), f.width):
                got[(c.cell_row, c.cell_col)] = [b.raw for b in c.bins]
            for r in range(h // 8):
                for col in range(w // 8):
                    assert got[(r, col)] == want[r][col], (w, h, ppc, r, col)


def test_grid_matches_stream():
    rng = np.random.default_rng(33)
    px = rng.integers(0, 256, size=(24, 40), dtype=np.uint8)
    gx, gy = gradient_field(px)
    grid = cell_histogram_grid(magnitude_field(gx, gy), *orient_field(gx, gy))
    f = Frame.from_array(px)
    for c in accumulate_cells(binned_packets(f, 8), f.width):
        assert grid[c.cell_row, c.cell_col].tolist() == [b.raw for b in c.bins]


def test_mass_conservation():
    # sum over bins == sum over pixels of 2*(mag>>1), per cell
    rng = np.random.default_rng(34)
    px = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
    gx, gy = gradient_field(px)
    mag = magnitude_field(gx, gy)
    grid = cell_histogram_grid(mag, *orient_field(gx, gy))
    # each pixel deposits (m >> 1) widened by one fraction bit into BOTH bins
    expect = ((mag.astype(np.int64) >> 1) << 2).reshape(2, 8, 2, 8).sum(axis=(1, 3))
    assert np.array_equal(grid.sum(axis=2), expect)


def test_histogram_never_saturates_at_default_widths():
    # worst case: every pixel at the magnitude ceiling
    bg = BinnedGradient(Fx(MAG_FMT.max_raw, MAG_FMT), 3, 4)
    pkts = [[bg] * 8 for _ in range(8)]
    stats = SaturationStats()
    (c,) = accumulate_cells(pkts, width=8, stats=stats)
    assert c.bins[3].raw == 64 * ((MAG_FMT.max_raw >> 1) << 1) == 65408
    assert c.bins[3].raw <= HIST_FMT.max_raw
    assert stats.total == 0


def test_protocol_errors():
    with pytest.raises(GeometryError):
        list(accumulate_cells([], width=12))

    bg = BinnedGradient(Fx(0, MAG_FMT), 0, 1)
    with pytest.raises(StreamProtocolError):
        list(accumulate_cells([[bg] * 3], width=8))  # 3 lanes misaligned

    pkts = [[bg] * 8 for _ in range(7)]
    with pytest.raises(StreamProtocolError):
        list(accumulate_cells(pkts, width=8))  # ends mid-cell

    pkts = [[bg] * 8, [bg] * 4]
    with pytest.raises(StreamProtocolError):
        list(accumulate_cells(pkts, width=8))  # ends mid-row


def test_dump_cells_layout():
    grid = np.arange(18, dtype=np.int64).reshape(1, 2, 9)
    blob = dump_cells(grid)
    assert len(blob) == 18 * 4
    assert blob[:8] == b"\x00\x00\x00\x00\x01\x00\x00\x00"
    assert np.array_equal(np.frombuffer(blob, dtype="<i4"), np.arange(18))
