"""Binary PGM (P5) and PPM (P6) ingestion with exact integer luma.

Only maxval 255 is supported. Header comments (# to end of line) are allowed
anywhere between tokens. Color input collapses to grayscale with the integer
luma (77*R + 150*G + 29*B) >> 8; the weights sum to 256, so white maps to 255.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .stream import Frame


class PnmError(ValueError):
    """Malformed or unsupported PGM/PPM input."""


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First `count` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset one byte past the single whitespace
    that terminates the last token (the binary payload starts there).
    """
    tokens: list[bytes] = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i] == ord("#"):
            while i < n and data[i] not in (0x0A, 0x0D):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace() and data[i] != ord("#"):
            i += 1
        if start == i:
            raise PnmError("truncated header")
        tokens.append(data[start:i])
    if i >= n or not data[i : i + 1].isspace():
        raise PnmError("missing whitespace after maxval")
    return tokens, i + 1


def load_image(path: str | Path) -> Frame:
    """Load a P5/P6 file as a grayscale Frame (dimensions multiples of 8)."""
    data = Path(path).read_bytes()
    if len(data) < 2 or data[:1] != b"P" or data[1:2] not in (b"5", b"6"):
        raise PnmError(f"{path}: not a binary PGM (P5) or PPM (P6) file")
    tokens, offset = _header_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise PnmError(f"{path}: unsupported magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise PnmError(f"{path}: non-numeric header fields") from None
    if width <= 0 or height <= 0:
        raise PnmError(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise PnmError(f"{path}: unsupported maxval {maxval} (only 255)")
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    payload = data[offset : offset + need]
    if len(payload) < need:
        raise PnmError(f"{path}: truncated pixel data "
                       f"({len(payload)} of {need} bytes)")
    px = np.frombuffer(payload, dtype=np.uint8, count=need)
    if channels == 1:
        gray = px.reshape(height, width)
    else:
        rgb = px.reshape(height, width, 3).astype(np.uint32)
        gray = ((77 * rgb[:, :, 0] + 150 * rgb[:, :, 1] + 29 * rgb[:, :, 2]) >> 8).astype(np.uint8)
    return Frame.from_array(gray)


def save_pgm(frame: Frame, path: str | Path) -> None:
    """Write a Frame as a binary P5 file (test fixture helper)."""
    header = f"P5\n{frame.width} {frame.height}\n255\n".encode()
    Path(path).write_bytes(header + frame.pixels.tobytes())
