"""Binary PGM (P5, 8-bit) reading and writing.

Used for simulator input frames, rendered event surfaces, and hand masks.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError


def write_pgm(path, image: np.ndarray) -> None:
    """Write a (height, width) uint8 array as a binary P5 file."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ParseError(f"PGM image must be 2-D, got shape {img.shape}")
    if img.dtype != np.uint8:
        if img.size and (img.min() < 0 or img.max() > 255):
            raise ParseError("PGM values must fit in [0, 255]")
        img = img.astype(np.uint8)
    height, width = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary P5 file into a (height, width) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ParseError(f"{path}: not a binary PGM (P5) file")
    # Header: magic, width, height, maxval; comments (#...) allowed between tokens.
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise ParseError(f"{path}: bad PGM header") from exc
    if maxval != 255:
        raise ParseError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
    expected = width * height
    pixels = data[pos : pos + expected]
    if len(pixels) != expected:
        raise ParseError(f"{path}: expected {expected} pixel bytes, got {len(pixels)}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width).copy()
