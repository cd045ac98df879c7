"""Grayscale Portable Float Map (``Pf``) reading and writing.

Layout: ``Pf\\n``, ``W H\\n``, a scale line whose sign gives the byte order
(negative = little-endian), then ``W*H`` float32 values, rows bottom-to-top.
"""

from __future__ import annotations

import os

import numpy as np


class PFMError(ValueError):
    pass


def write_pfm(path, image) -> None:
    img = np.asarray(image)
    if img.ndim != 2 or 0 in img.shape:
        raise PFMError(f"expected a non-empty 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise PFMError("image contains non-finite values")
    h, w = img.shape
    data = np.ascontiguousarray(np.flipud(img.astype("<f4")))
    write_atomic(path, b"Pf\n%d %d\n-1.0\n" % (w, h) + data.tobytes())


def _readline(f) -> bytes:
    line = f.readline()
    if not line.endswith(b"\n"):
        raise PFMError("truncated header")
    return line.strip()


def read_pfm(path) -> np.ndarray:
    """Return the image as float32, top row first."""
    with open(path, "rb") as f:
        magic = _readline(f)
        if magic == b"PF":
            raise PFMError("unsupported channel count: color PFM (PF)")
        if magic != b"Pf":
            raise PFMError(f"bad magic {magic!r}")
        try:
            w, h = (int(x) for x in _readline(f).split())
            scale = float(_readline(f))
        except ValueError as exc:
            raise PFMError(f"malformed header: {exc}") from None
        if w <= 0 or h <= 0:
            raise PFMError(f"invalid dimensions {w}x{h}")
        if scale == 0:
            raise PFMError("scale must be non-zero")
        payload = f.read()
    n = w * h * 4
    if len(payload) < n:
        raise PFMError(f"truncated payload: {len(payload)} of {n} bytes")
    if len(payload) > n:
        raise PFMError(f"{len(payload) - n} trailing bytes after payload")
    dtype = "<f4" if scale < 0 else ">f4"
    img = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    return np.flipud(img).astype(np.float32)


def write_atomic(path, data: bytes) -> None:
    """Write-temp-then-rename so readers never see a partial file."""
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)
