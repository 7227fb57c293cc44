"""Binary PPM (P6) / PGM (P5) reading and writing at maxval 255."""

from __future__ import annotations

import os
from typing import Sequence

import numpy as np

from .errors import FormatError, ShapeError


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    out: list[bytes] = []
    pos = 0
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated netpbm header")
        out.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return out, pos + 1


def decode(data: bytes, name: str = "<bytes>") -> np.ndarray:
    """Decode P5/P6 bytes to ``(H, W, C)`` uint8."""
    toks, offset = _tokens(data, 4)
    magic = toks[0]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"{name}: unsupported netpbm magic {magic!r}")
    try:
        w, h, maxval = (int(t) for t in toks[1:])
    except ValueError:
        raise FormatError(f"{name}: malformed header") from None
    if maxval != 255:
        raise FormatError(f"{name}: only maxval 255 is supported, got {maxval}")
    if w < 1 or h < 1:
        raise FormatError(f"{name}: bad size {w}x{h}")
    c = 3 if magic == b"P6" else 1
    need = w * h * c
    raster = data[offset : offset + need]
    if len(raster) != need:
        raise FormatError(f"{name}: raster truncated at byte {offset + len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, c)


def read(path: str | os.PathLike) -> np.ndarray:
    """Read a PPM/PGM file as float64 ``(H, W, C)`` intensities in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    return decode(data, os.fspath(path)).astype(np.float64) / 255.0


def to_bytes(x: np.ndarray) -> np.ndarray:
    """Quantise unit-interval intensities to uint8 (round half up)."""
    x = np.asarray(x, dtype=np.float64)
    return np.floor(np.clip(x, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def encode(x: np.ndarray, comments: Sequence[str] = ()) -> bytes:
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[2] not in (1, 3):
        raise ShapeError(f"cannot encode array of shape {x.shape} as PPM/PGM")
    raw = x if x.dtype == np.uint8 else to_bytes(x)
    h, w, c = raw.shape
    header = b"P6\n" if c == 3 else b"P5\n"
    for line in comments:
        header += b"# " + line.encode("ascii") + b"\n"
    header += f"{w} {h}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(raw).tobytes()


def write(path: str | os.PathLike, x: np.ndarray, comments: Sequence[str] = ()) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(x, comments))
