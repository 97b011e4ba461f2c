"""Minimal PGM (P2/P5) reader and writer, 8- or 16-bit."""

from __future__ import annotations

import numpy as np


def _tokens(raw: bytes):
    """Yield whitespace-separated header tokens, skipping # comments."""
    pos = 0
    while pos < len(raw):
        ch = raw[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            end = raw.find(b"\n", pos)
            pos = len(raw) if end < 0 else end + 1
        else:
            end = pos
            while end < len(raw) and not raw[end : end + 1].isspace():
                end += 1
            yield raw[pos:end], end
            pos = end


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a PGM file; returns (uint array of shape (h, w), maxval)."""
    with open(path, "rb") as f:
        raw = f.read()
    it = _tokens(raw)
    try:
        magic, _ = next(it)
        (w, _), (h, _), (maxval, after) = (
            (int(t), e) for t, e in (next(it), next(it), next(it))
        )
    except StopIteration:
        raise ValueError("truncated PGM header") from None
    if magic not in (b"P2", b"P5"):
        raise ValueError(f"unsupported PGM magic {magic!r}")
    if w <= 0 or h <= 0:
        raise ValueError("PGM dimensions must be positive")
    if not 0 < maxval < 65536:
        raise ValueError(f"bad PGM maxval {maxval}")
    if magic == b"P2":
        data = np.array(raw[after:].split(), dtype=np.uint32)
    else:
        dtype = ">u2" if maxval > 255 else "u1"
        data = np.frombuffer(raw, dtype=dtype, offset=after + 1, count=w * h)
    if data.size != w * h:
        raise ValueError("PGM payload does not match its dimensions")
    return data.reshape(h, w).astype(np.uint32), maxval


def write_pgm(path, pixels: np.ndarray, maxval: int = 255) -> None:
    """Write a raw (P5) PGM; pixels must already be integers in [0, maxval]."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise ValueError("PGM pixels must be a 2-d array")
    if not 0 < maxval < 65536:
        raise ValueError(f"bad PGM maxval {maxval}")
    h, w = pixels.shape
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode())
        f.write(pixels.astype(dtype).tobytes())
