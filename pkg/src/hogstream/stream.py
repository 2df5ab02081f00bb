"""Pixel-vector stream model: frame packing, flag discipline, 3x3 context recovery.

A frame enters the pipeline as a raster-order sequence of packets, each
carrying X pixels (X in {1,2,4,8}), a start-of-frame flag on exactly the first
packet and an end-of-line flag on the last packet of every row. The context
stage rebuilds the 3x3 neighborhood of every pixel using two full row buffers,
replicating edge pixels outward. The model is functional: emission order and
values are exact, cycle timing is not modeled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

VALID_PPC = (1, 2, 4, 8)
CELL = 8


class GeometryError(ValueError):
    """Frame or grid dimensions violate a precondition."""


class StreamProtocolError(ValueError):
    """Packet flags or sizes violate the stream framing rules."""


@dataclass(frozen=True)
class Frame:
    """Row-major 8-bit grayscale frame; both dimensions multiples of 8."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.width % CELL or self.height % CELL or self.width <= 0 or self.height <= 0:
            raise GeometryError(
                f"frame dimensions must be positive multiples of {CELL}, "
                f"got {self.width}x{self.height}"
            )
        px = self.pixels
        if px.shape != (self.height, self.width):
            raise GeometryError(f"pixel array shape {px.shape} does not match "
                                f"{self.height}x{self.width}")
        if px.dtype != np.uint8:
            raise GeometryError(f"pixels must be uint8, got {px.dtype}")

    @classmethod
    def from_array(cls, pixels: np.ndarray) -> "Frame":
        px = np.ascontiguousarray(pixels, dtype=np.uint8)
        h, w = px.shape
        return cls(width=w, height=h, pixels=px)


@dataclass(frozen=True)
class StreamPacket:
    """X pixel intensities plus framing flags."""

    pixels: tuple[int, ...]
    sof: bool = False
    eol: bool = False


@dataclass(frozen=True)
class ContextPacket:
    """One 3x3 neighborhood per lane, rows top-to-bottom, columns left-to-right."""

    contexts: tuple[tuple[tuple[int, int, int], ...], ...]


def pack_frame(frame: Frame, ppc: int) -> Iterator[StreamPacket]:
    """Serialize a frame into raster-order packets of ``ppc`` pixels.

    sof is set on exactly the first packet, eol on the last packet of every
    row. For an 8-wide frame at ppc=8 the single row packet carries both.
    """
    if ppc not in VALID_PPC:
        raise GeometryError(f"ppc must be one of {VALID_PPC}, got {ppc}")
    if frame.width % ppc:
        raise GeometryError(f"ppc {ppc} does not divide width {frame.width}")
    px = frame.pixels
    last = frame.width - ppc
    for y in range(frame.height):
        row = px[y]
        for x0 in range(0, frame.width, ppc):
            yield StreamPacket(
                pixels=tuple(int(v) for v in row[x0 : x0 + ppc]),
                sof=(y == 0 and x0 == 0),
                eol=(x0 == last),
            )


def unpack(packets: Iterable[StreamPacket]) -> Frame:
    """Rebuild a frame from a packet stream, validating flag discipline."""
    rows: list[list[int]] = []
    current: list[int] = []
    ppc = None
    for i, pkt in enumerate(packets):
        if ppc is None:
            ppc = len(pkt.pixels)
            if ppc not in VALID_PPC:
                raise StreamProtocolError(f"packet width {ppc} not in {VALID_PPC}")
        elif len(pkt.pixels) != ppc:
            raise StreamProtocolError(
                f"packet {i} width {len(pkt.pixels)} changed from {ppc}"
            )
        if pkt.sof != (i == 0):
            raise StreamProtocolError(f"sof flag wrong on packet {i}")
        current.extend(pkt.pixels)
        if pkt.eol:
            if rows and len(current) != len(rows[0]):
                raise StreamProtocolError(
                    f"row {len(rows)} has {len(current)} pixels, expected {len(rows[0])}"
                )
            rows.append(current)
            current = []
    if ppc is None:
        raise StreamProtocolError("empty stream")
    if current:
        raise StreamProtocolError("stream ended mid-row (missing eol)")
    return Frame.from_array(np.array(rows, dtype=np.uint8))


def _row_contexts(above: list[int], row: list[int], below: list[int],
                  x0: int, ppc: int, width: int) -> ContextPacket:
    ctxs = []
    for x in range(x0, x0 + ppc):
        xl = max(x - 1, 0)
        xr = min(x + 1, width - 1)
        ctxs.append((
            (above[xl], above[x], above[xr]),
            (row[xl], row[x], row[xr]),
            (below[xl], below[x], below[xr]),
        ))
    return ContextPacket(contexts=tuple(ctxs))


def context_stream(packets: Iterable[StreamPacket], width: int) -> Iterator[ContextPacket]:
    """Recover the 3x3 neighborhood of every pixel, one ContextPacket per
    input packet position, emitted in raster order.

    Functional model of the two-row delay buffer: a row's contexts are emitted
    once the row below it has arrived; border pixels replicate the nearest
    edge pixel. The full frame's contexts always come out, after an internal
    delay of one row.
    """
    if width <= 0:
        raise GeometryError(f"width must be positive, got {width}")
    ppc = None
    per_row = None
    prev: list[int] | None = None   # row y-1
    cur: list[int] = []             # row being assembled
    done_rows = 0
    packet_in_row = 0

    def emit_row(above: list[int], row: list[int], below: list[int]) -> Iterator[ContextPacket]:
        for x0 in range(0, width, ppc):
            yield _row_contexts(above, row, below, x0, ppc, width)

    pending: list[int] | None = None  # completed row waiting for the row below
    first = True
    for pkt in packets:
        if ppc is None:
            ppc = len(pkt.pixels)
            if ppc not in VALID_PPC:
                raise StreamProtocolError(f"packet width {ppc} not in {VALID_PPC}")
            if width % ppc:
                raise GeometryError(f"ppc {ppc} does not divide width {width}")
            per_row = width // ppc
        elif len(pkt.pixels) != ppc:
            raise StreamProtocolError("packet width changed mid-stream")
        if pkt.sof != first:
            raise StreamProtocolError("sof flag out of place")
        first = False
        packet_in_row += 1
        expect_eol = packet_in_row == per_row
        if pkt.eol != expect_eol:
            raise StreamProtocolError(
                f"eol flag wrong at packet {packet_in_row} of row {done_rows}"
            )
        cur.extend(pkt.pixels)
        if pkt.eol:
            if pending is not None:
                above = prev if prev is not None else pending
                yield from emit_row(above, pending, cur)
                prev = pending
            pending = cur
            cur = []
            done_rows += 1
            packet_in_row = 0
    if first:
        raise StreamProtocolError("empty stream")
    if packet_in_row:
        raise StreamProtocolError("stream ended mid-row (missing eol)")
    # bottom row: the row below replicates the row itself
    above = prev if prev is not None else pending
    yield from emit_row(above, pending, pending)


def context_planes(frame: Frame) -> np.ndarray:
    """Whole-frame context tensor (3, 3, H, W) with edge replication.

    Array counterpart of context_stream: plane [dy][dx] holds, for every
    pixel, the neighbor at (y+dy-1, x+dx-1) clamped to the frame. Used by the
    vectorized pipeline; bit-identical to the packet path by construction
    (tests assert it).
    """
    padded = np.pad(frame.pixels, 1, mode="edge")
    h, w = frame.height, frame.width
    planes = np.empty((3, 3, h, w), dtype=np.uint8)
    for dy in range(3):
        for dx in range(3):
            planes[dy, dx] = padded[dy : dy + h, dx : dx + w]
    return planes
