"""Locating the five facial regions on an edge map and cutting fixed-size
patches out of the equalized face.

Regions are always handled in the order of :data:`REGION_NAMES`; feature
vectors downstream are concatenated in that order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .imgio import Rect, as_gray

__all__ = [
    "REGION_NAMES",
    "RegionSpec",
    "RegionLayout",
    "RegionPatch",
    "RegionSet",
    "default_layout",
    "locate_regions",
    "resize_bilinear",
    "extract_patch",
    "extract_all",
]

REGION_NAMES = ("left_eyebrow", "right_eyebrow", "left_eye", "right_eye", "mouth")


@dataclass(frozen=True)
class RegionSpec:
    """One facial region.

    ``window`` is the search window for edge pixels, ``box`` the (w, h) of the
    rectangle cut around the located centre and ``target`` the (w, h) the cut
    is resampled to.
    """

    window: Rect
    box: tuple[int, int]
    target: tuple[int, int]

    @property
    def length(self) -> int:
        return self.target[0] * self.target[1]


def _inclusive(rows: tuple[int, int], cols: tuple[int, int]) -> Rect:
    return Rect(cols[0], rows[0], cols[1] - cols[0] + 1, rows[1] - rows[0] + 1)


@dataclass(frozen=True)
class RegionLayout:
    face_size: tuple[int, int]  # (w, h)
    regions: dict = field(default_factory=dict)  # name -> RegionSpec

    def __post_init__(self):
        missing = [n for n in REGION_NAMES if n not in self.regions]
        if missing:
            raise ValueError(f"layout is missing regions {missing}")
        fw, fh = self.face_size
        for name in REGION_NAMES:
            spec = self.regions[name]
            if not spec.window.inside(fw, fh):
                raise ValueError(f"{name} window {tuple(spec.window)} lies outside the {fw}x{fh} face")
            bw, bh = spec.box
            if not (1 <= bw <= fw and 1 <= bh <= fh):
                raise ValueError(f"{name} box {spec.box} does not fit the {fw}x{fh} face")
            if spec.target[0] < 1 or spec.target[1] < 1:
                raise ValueError(f"{name} target size {spec.target} must be positive")

    def __getitem__(self, name: str) -> RegionSpec:
        return self.regions[name]

    @property
    def lengths(self) -> list[int]:
        return [self.regions[n].length for n in REGION_NAMES]

    def to_dict(self) -> dict:
        return {
            "face_size": list(self.face_size),
            "regions": {
                n: {
                    "window": list(self.regions[n].window),
                    "box": list(self.regions[n].box),
                    "target": list(self.regions[n].target),
                }
                for n in REGION_NAMES
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegionLayout":
        regions = {
            n: RegionSpec(Rect(*r["window"]), tuple(r["box"]), tuple(r["target"]))
            for n, r in d["regions"].items()
        }
        return cls(tuple(d["face_size"]), regions)


def default_layout() -> RegionLayout:
    """Windows for a centered 85x85 frontal face.

    Boxes are 1.25x the target size so the bilinear resample slightly
    downsamples the cut.
    """
    brow, eye, mouth = (24, 12), (24, 12), (32, 16)
    return RegionLayout(
        (85, 85),
        {
            "left_eyebrow": RegionSpec(_inclusive((12, 34), (6, 42)), (30, 15), brow),
            "right_eyebrow": RegionSpec(_inclusive((12, 34), (43, 79)), (30, 15), brow),
            "left_eye": RegionSpec(_inclusive((28, 52), (6, 42)), (30, 15), eye),
            "right_eye": RegionSpec(_inclusive((28, 52), (43, 79)), (30, 15), eye),
            "mouth": RegionSpec(_inclusive((54, 82), (20, 65)), (40, 20), mouth),
        },
    )


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def _place(center_x: float, center_y: float, box: tuple[int, int], width: int, height: int) -> Rect:
    bw, bh = box
    x = _round_half_up(center_x) - bw // 2
    y = _round_half_up(center_y) - bh // 2
    x = min(max(x, 0), width - bw)
    y = min(max(y, 0), height - bh)
    return Rect(x, y, bw, bh)


def locate_regions(edges, layout: RegionLayout | None = None) -> dict[str, Rect]:
    """Centre each region's box on the centroid of the edge pixels in its
    search window, or on the window centre when the window holds no edges.

    The box centre is ``(x + w // 2, y + h // 2)``; boxes are clamped to the
    image.
    """
    layout = layout or default_layout()
    edges = np.asarray(edges, dtype=bool)
    if edges.ndim != 2:
        raise ValueError("edge map must be 2-D")
    height, width = edges.shape
    located = {}
    for name in REGION_NAMES:
        spec = layout[name]
        win = spec.window
        if not win.inside(width, height):
            raise ValueError(f"{name} window {tuple(win)} lies outside the {width}x{height} edge map")
        sub = edges[win.y : win.y + win.h, win.x : win.x + win.w]
        rows, cols = np.nonzero(sub)
        if rows.size:
            cx = win.x + cols.mean()
            cy = win.y + rows.mean()
        else:
            cx = win.x + (win.w - 1) / 2
            cy = win.y + (win.h - 1) / 2
        located[name] = _place(cx, cy, spec.box, width, height)
    return located


def resize_bilinear(img, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resample with corner-aligned sampling grids.

    Output sample ``i`` reads input coordinate ``i * (n_in - 1) / (n_out - 1)``;
    a single output sample reads the input centre.
    """
    src = np.asarray(img, dtype=np.float64)
    if out_w < 1 or out_h < 1:
        raise ValueError(f"target size {out_w}x{out_h} must be positive")
    in_h, in_w = src.shape

    def grid(n_in, n_out):
        if n_out == 1:
            return np.array([(n_in - 1) / 2.0])
        return np.arange(n_out) * ((n_in - 1) / (n_out - 1))

    ys, xs = grid(in_h, out_h), grid(in_w, out_w)
    y0 = np.clip(np.floor(ys).astype(int), 0, max(in_h - 2, 0))
    x0 = np.clip(np.floor(xs).astype(int), 0, max(in_w - 2, 0))
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1 - fx) + src[np.ix_(y0, x1)] * fx
    bottom = src[np.ix_(y1, x0)] * (1 - fx) + src[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bottom * fy


@dataclass(frozen=True)
class RegionPatch:
    name: str
    values: np.ndarray  # float64, row-major, length target_w * target_h


@dataclass(frozen=True)
class RegionSet:
    rects: dict  # name -> Rect
    patches: tuple  # RegionPatch, in REGION_NAMES order

    def vectors(self) -> list[np.ndarray]:
        return [p.values for p in self.patches]


def extract_patch(img, rect: Rect, target: tuple[int, int], name: str = "") -> RegionPatch:
    arr = as_gray(img)
    rect = Rect(*rect)
    if not rect.inside(arr.shape[1], arr.shape[0]):
        raise ValueError(f"patch window {tuple(rect)} lies outside a {arr.shape[1]}x{arr.shape[0]} image")
    tw, th = target
    if tw < 1 or th < 1:
        raise ValueError(f"target size {tw}x{th} must be positive")
    sub = arr[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w]
    if (rect.w, rect.h) == (tw, th):
        values = sub.astype(np.float64).ravel()
    else:
        values = resize_bilinear(sub, tw, th).ravel()
    return RegionPatch(name, values)


def extract_all(img, edges, layout: RegionLayout | None = None) -> RegionSet:
    layout = layout or default_layout()
    arr = as_gray(img)
    if np.shape(edges) != arr.shape:
        raise ValueError(f"edge map shape {np.shape(edges)} differs from image shape {arr.shape}")
    rects = locate_regions(edges, layout)
    patches = tuple(extract_patch(arr, rects[n], layout[n].target, n) for n in REGION_NAMES)
    return RegionSet(rects, patches)
