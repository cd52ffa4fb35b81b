"""Canny edge detector: smoothing, Sobel gradients, non-maximum suppression
and double-threshold hysteresis.

Both convolutions replicate border pixels.  Kernels are applied as
correlations, so ``gx`` is positive where intensity grows to the right and
``gy`` is positive where it grows upward (toward row 0).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .imgio import as_gray

__all__ = [
    "GAUSSIAN_KERNEL",
    "GAUSSIAN_DIVISOR",
    "SOBEL_X",
    "SOBEL_Y",
    "CannyConfig",
    "GradientField",
    "gaussian_smooth",
    "sobel_gradients",
    "quantize_direction",
    "non_max_suppress",
    "hysteresis",
    "canny",
    "edges_to_image",
]

# sigma = 1.4, integer approximation
GAUSSIAN_KERNEL = np.array(
    [
        [2, 4, 5, 4, 2],
        [4, 9, 12, 9, 4],
        [5, 12, 15, 12, 5],
        [4, 9, 12, 9, 4],
        [2, 4, 5, 4, 2],
    ],
    dtype=np.int64,
)
GAUSSIAN_DIVISOR = 159

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.int64)
SOBEL_Y = np.array([[1, 2, 1], [0, 0, 0], [-1, -2, -1]], dtype=np.int64)


@dataclass(frozen=True)
class CannyConfig:
    """Hysteresis thresholds.

    ``low``/``high`` are absolute gradient magnitudes.  When left as
    ``None`` they are derived per image from the largest magnitude that
    survives non-maximum suppression: ``high = high_ratio * max`` and
    ``low = low_ratio * high``.
    """

    low: Optional[float] = None
    high: Optional[float] = None
    high_ratio: float = 0.2
    low_ratio: float = 0.5

    def __post_init__(self):
        if (self.low is None) != (self.high is None):
            raise ValueError("set both low and high thresholds or neither")
        if self.low is not None and not (0 < self.low < self.high):
            raise ValueError(f"thresholds must satisfy 0 < low < high, got low={self.low}, high={self.high}")
        if not (0 < self.high_ratio <= 1):
            raise ValueError("high_ratio must lie in (0, 1]")
        if not (0 < self.low_ratio < 1):
            raise ValueError("low_ratio must lie in (0, 1)")

    def thresholds(self, magnitude: np.ndarray) -> tuple[float, float]:
        if self.low is not None:
            return float(self.low), float(self.high)
        high = self.high_ratio * float(magnitude.max(initial=0.0))
        return self.low_ratio * high, high

    def to_dict(self) -> dict:
        return {"low": self.low, "high": self.high, "high_ratio": self.high_ratio, "low_ratio": self.low_ratio}

    @classmethod
    def from_dict(cls, d: dict) -> "CannyConfig":
        return cls(**{k: d[k] for k in ("low", "high", "high_ratio", "low_ratio") if k in d})


@dataclass(frozen=True)
class GradientField:
    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray
    direction: np.ndarray  # degrees in [0, 180)

    @property
    def shape(self) -> tuple[int, int]:
        return self.magnitude.shape


def _correlate(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Integer correlation with edge replication."""
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    padded = np.pad(img.astype(np.int64), ((ph, ph), (pw, pw)), mode="edge")
    h, w = img.shape
    out = np.zeros((h, w), dtype=np.int64)
    for i in range(kh):
        for j in range(kw):
            if kernel[i, j]:
                out += kernel[i, j] * padded[i : i + h, j : j + w]
    return out


def gaussian_smooth(img) -> np.ndarray:
    arr = as_gray(img)
    if arr.shape[0] < 5 or arr.shape[1] < 5:
        raise ValueError(f"image {arr.shape[1]}x{arr.shape[0]} is smaller than the 5x5 Gaussian kernel")
    acc = _correlate(arr, GAUSSIAN_KERNEL)
    # acc >= 0, so this is round-half-up of acc / 159
    out = (acc + GAUSSIAN_DIVISOR // 2) // GAUSSIAN_DIVISOR
    return np.clip(out, 0, 255).astype(np.uint8)


def sobel_gradients(img) -> GradientField:
    arr = as_gray(img)
    if arr.shape[0] < 3 or arr.shape[1] < 3:
        raise ValueError(f"image {arr.shape[1]}x{arr.shape[0]} is smaller than the 3x3 Sobel kernel")
    gx = _correlate(arr, SOBEL_X).astype(np.float64)
    gy = _correlate(arr, SOBEL_Y).astype(np.float64)
    magnitude = np.sqrt(gx * gx + gy * gy)
    direction = np.degrees(np.arctan2(gy, gx)) % 180.0
    # -0.0 % 180 and values rounding up to exactly 180
    direction[direction >= 180.0] = 0.0
    return GradientField(gx, gy, magnitude, direction)


def quantize_direction(direction: np.ndarray) -> np.ndarray:
    """Map angles in degrees to the bins 0, 45, 90, 135."""
    d = np.asarray(direction) % 180.0
    bins = np.zeros(d.shape, dtype=np.int64)
    bins[(d >= 22.5) & (d < 67.5)] = 45
    bins[(d >= 67.5) & (d < 112.5)] = 90
    bins[(d >= 112.5) & (d < 157.5)] = 135
    return bins


# (drow, dcol) of one neighbour along the gradient; the other is the negation.
# gy points up the image, so a 45 degree gradient heads to row-1, col+1.
_NEIGHBOUR = {0: (0, 1), 45: (-1, 1), 90: (-1, 0), 135: (-1, -1)}


def non_max_suppress(field: GradientField) -> GradientField:
    """Zero every magnitude that is smaller than either neighbour along its
    quantized gradient direction.  Ties survive; out-of-image neighbours
    count as zero."""
    mag = field.magnitude
    h, w = mag.shape
    padded = np.pad(mag, 1, mode="constant")
    bins = quantize_direction(field.direction)
    keep = np.zeros((h, w), dtype=bool)
    for b, (dr, dc) in _NEIGHBOUR.items():
        fwd = padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]
        bwd = padded[1 - dr : 1 - dr + h, 1 - dc : 1 - dc + w]
        keep |= (bins == b) & (mag >= fwd) & (mag >= bwd)
    return GradientField(field.gx, field.gy, np.where(keep, mag, 0.0), field.direction)


_EIGHT = np.ones((3, 3), dtype=bool)


def hysteresis(field: GradientField, cfg: CannyConfig = CannyConfig()) -> np.ndarray:
    """Boolean edge map: strong pixels plus weak pixels 8-connected to one."""
    mag = field.magnitude
    low, high = cfg.thresholds(mag)
    if high <= 0:
        return np.zeros(mag.shape, dtype=bool)
    if not low < high:
        raise ValueError(f"low threshold {low} must be below high threshold {high}")
    candidates = mag >= low
    labels, n = ndimage.label(candidates, structure=_EIGHT)
    if n == 0:
        return np.zeros(mag.shape, dtype=bool)
    has_strong = np.zeros(n + 1, dtype=bool)
    has_strong[labels[mag >= high]] = True
    has_strong[0] = False
    return has_strong[labels]


def canny(img, cfg: CannyConfig = CannyConfig()) -> np.ndarray:
    smoothed = gaussian_smooth(img)
    return hysteresis(non_max_suppress(sobel_gradients(smoothed)), cfg)


def edges_to_image(edges: np.ndarray) -> np.ndarray:
    """Edge map as a 0/255 raster for PGM export."""
    return np.where(np.asarray(edges, dtype=bool), 255, 0).astype(np.uint8)
