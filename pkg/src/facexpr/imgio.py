"""Grayscale image I/O and the preprocessing front of the pipeline.

Images are plain ``numpy`` arrays of dtype ``uint8`` and shape
``(height, width)``, stored row-major.  Only binary PGM (``P5``) with
``maxval <= 255`` is read and written; convert other formats externally
(for instance ``convert face.tiff face.pgm``).
"""
from __future__ import annotations

import os
import re
from typing import NamedTuple, Union

import numpy as np

__all__ = [
    "Rect",
    "PgmError",
    "UnsupportedMagicError",
    "PgmHeaderError",
    "MaxvalError",
    "TruncatedDataError",
    "as_gray",
    "load_pgm",
    "save_pgm",
    "read_pgm",
    "write_pgm",
    "crop",
    "center_rect",
    "histogram_equalize",
]

PathLike = Union[str, os.PathLike]


class Rect(NamedTuple):
    """Axis-aligned window: ``x`` is the column offset, ``y`` the row offset."""

    x: int
    y: int
    w: int
    h: int

    def inside(self, width: int, height: int) -> bool:
        return (
            self.w >= 1
            and self.h >= 1
            and self.x >= 0
            and self.y >= 0
            and self.x + self.w <= width
            and self.y + self.h <= height
        )


class PgmError(ValueError):
    """Base class for PGM decoding failures."""


class UnsupportedMagicError(PgmError):
    pass


class PgmHeaderError(PgmError):
    pass


class MaxvalError(PgmError):
    pass


class TruncatedDataError(PgmError):
    pass


def as_gray(img) -> np.ndarray:
    """Validate ``img`` as a grayscale raster and return it as ``uint8``.

    Integer or float arrays are accepted as long as every value is an
    integer in [0, 255]; nothing is rescaled.
    """
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D raster, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        return arr
    if arr.dtype == bool:
        return arr.astype(np.uint8) * 255
    if not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 255:
        raise ValueError("pixel values must lie in [0, 255]")
    if not np.array_equal(arr, np.round(arr)):
        raise ValueError("pixel values must be integers")
    return arr.astype(np.uint8)


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    for _ in range(count):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise PgmHeaderError("PGM header ended early")
        tokens.append(m.group(1))
        pos = m.end()
    # exactly one whitespace byte separates maxval from the raster
    if pos >= len(data) or data[pos : pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise PgmHeaderError("PGM header is not terminated by whitespace")
    return tokens, pos + 1


def load_pgm(data: bytes) -> np.ndarray:
    """Decode a binary PGM byte string into a ``uint8`` array.

    Raises
    ------
    UnsupportedMagicError
        The magic number is not ``P5``.
    PgmHeaderError
        Width, height or maxval are missing or not positive integers.
    MaxvalError
        ``maxval`` exceeds 255 (16-bit PGM is not supported).
    TruncatedDataError
        Fewer than ``width * height`` raster bytes follow the header.
    """
    data = bytes(data)
    if data[:2] != b"P5":
        raise UnsupportedMagicError(f"unsupported magic {data[:2]!r}; only binary PGM (P5) is read")
    tokens, offset = _header_tokens(data[2:], 3)
    offset += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise PgmHeaderError(f"malformed PGM header fields {tokens!r}") from None
    if width < 1 or height < 1:
        raise PgmHeaderError(f"invalid PGM dimensions {width}x{height}")
    if maxval < 1:
        raise PgmHeaderError(f"invalid maxval {maxval}")
    if maxval > 255:
        raise MaxvalError(f"maxval {maxval} > 255 is not supported")
    n = width * height
    raster = data[offset : offset + n]
    if len(raster) < n:
        raise TruncatedDataError(f"expected {n} pixel bytes, found {len(raster)}")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()
    if img.max() > maxval:
        raise PgmError(f"pixel value {int(img.max())} exceeds maxval {maxval}")
    return img


def save_pgm(img) -> bytes:
    """Encode ``img`` as binary PGM with the canonical ``P5\\n<w> <h>\\n255\\n`` header."""
    arr = np.ascontiguousarray(as_gray(img))
    h, w = arr.shape
    return b"P5\n%d %d\n255\n" % (w, h) + arr.tobytes()


def read_pgm(path: PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return load_pgm(fh.read())


def write_pgm(path: PathLike, img) -> None:
    with open(path, "wb") as fh:
        fh.write(save_pgm(img))


def crop(img, rect: Rect) -> np.ndarray:
    arr = as_gray(img)
    h, w = arr.shape
    rect = Rect(*rect)
    if not rect.inside(w, h):
        raise ValueError(f"crop window {tuple(rect)} lies outside a {w}x{h} image")
    return arr[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w].copy()


def center_rect(width: int, height: int, size: int = 85) -> Rect:
    """Centered ``size`` x ``size`` window; the default face crop."""
    if size > width or size > height:
        raise ValueError(f"cannot center a {size}x{size} window in a {width}x{height} image")
    return Rect((width - size) // 2, (height - size) // 2, size, size)


def histogram_equalize(img) -> np.ndarray:
    """CDF-based histogram equalization.

    Each level ``v`` maps to ``round((cdf(v) - cdf_min) / (1 - cdf_min) * 255)``
    where ``cdf_min`` is the smallest non-zero CDF value.  Integer arithmetic
    is used throughout so the mapping is exact; halves round up.  A constant
    image is returned unchanged.
    """
    arr = as_gray(img)
    n = arr.size
    counts = np.cumsum(np.bincount(arr.ravel(), minlength=256)).astype(np.int64)
    cmin = int(counts[counts > 0][0])
    if cmin == n:
        return arr.copy()
    denom = n - cmin
    lut = (2 * 255 * (counts - cmin) + denom) // (2 * denom)
    lut = np.clip(lut, 0, 255).astype(np.uint8)
    return lut[arr]
