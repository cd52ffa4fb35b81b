"""Synthetic 85x85 expression faces for desk-scale end-to-end runs.

Each face is a fixed soft oval on a dark background with drawn eyebrows,
eyes and mouth.  The class decides eyebrow tilt and height, eye opening,
mouth curvature, width and opening; every sample jitters those parameters
and the feature positions, then adds Gaussian pixel noise.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .imgio import write_pgm
from .mlp import Expression

__all__ = ["CLASS_SHAPES", "render_face", "synth_face", "synth_dataset"]

SIZE = 85

# tilt: inner-end rise of each eyebrow (px), raise: eyebrow lift (px),
# eye: half-height of the eye opening, curve: mouth corner lift,
# width: mouth half-width, opening: lip gap, skew: one-sided corner lift
CLASS_SHAPES = {
    Expression.ANGER: dict(tilt=-6.0, raise_=-2.0, eye=2.0, curve=-0.5, width=9.0, opening=0.0, skew=0.0),
    Expression.FEAR: dict(tilt=4.0, raise_=3.0, eye=5.0, curve=-1.5, width=13.0, opening=3.0, skew=0.0),
    Expression.SURPRISE: dict(tilt=0.0, raise_=5.0, eye=5.5, curve=0.0, width=7.0, opening=7.0, skew=0.0),
    Expression.SADNESS: dict(tilt=5.0, raise_=0.0, eye=2.5, curve=-4.5, width=11.0, opening=0.0, skew=0.0),
    Expression.HAPPINESS: dict(tilt=0.0, raise_=0.0, eye=2.5, curve=6.0, width=15.0, opening=2.5, skew=0.0),
    Expression.DISGUST: dict(tilt=-1.0, raise_=-4.0, eye=1.0, curve=-1.0, width=10.0, opening=1.0, skew=4.0),
    Expression.NEUTRAL: dict(tilt=0.0, raise_=1.0, eye=3.5, curve=0.0, width=12.0, opening=0.0, skew=0.0),
}


def _segment_distance(rr, cc, p0, p1):
    (r0, c0), (r1, c1) = p0, p1
    dr, dc = r1 - r0, c1 - c0
    t = ((rr - r0) * dr + (cc - c0) * dc) / (dr * dr + dc * dc)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(rr - (r0 + t * dr), cc - (c0 + t * dc))


def _ink(dist, half_width):
    # coverage of a stroke with a one-pixel soft edge
    return np.clip(half_width + 0.5 - dist, 0.0, 1.0)


def render_face(tilt, raise_, eye, curve, width, opening, skew=0.0, dx=0.0, dy=0.0) -> np.ndarray:
    """Noise-free face as a float image in [0, 255]."""
    rr, cc = np.mgrid[0:SIZE, 0:SIZE].astype(np.float64)
    img = np.full((SIZE, SIZE), 105.0)

    # fixed face oval with a soft rim; the skin is shaded so its histogram
    # is wide and equalization does not inflate the pixel noise
    rho = np.hypot((cc - 42.0) / 44.0, (rr - 46.0) / 50.0)
    skin = 120.0 + 90.0 * np.clip(1.0 - rho, 0.0, 1.0)
    img += (skin - 105.0) * np.clip((1.02 - rho) / 0.12, 0.0, 1.0)

    dark = np.zeros_like(img)

    brow_y = 22.0 - raise_ + dy
    for side, cx in ((-1, 25.0 + dx), (1, 60.0 + dx)):
        inner_c = cx - side * 9.0
        outer_c = cx + side * 9.0
        p_in = (brow_y - tilt / 2.0, inner_c)
        p_out = (brow_y + tilt / 2.0, outer_c)
        dark = np.maximum(dark, 0.8 * _ink(_segment_distance(rr, cc, p_in, p_out), 1.5))

    eye_y = 40.0 + dy
    for cx in (25.0 + dx, 60.0 + dx):
        ellipse = np.hypot((cc - cx) / 7.0, (rr - eye_y) / max(eye, 0.5))
        dark = np.maximum(dark, 0.35 * np.clip((1.0 - ellipse) * 4.0, 0.0, 1.0))
        iris = np.hypot(cc - cx, rr - eye_y)
        dark = np.maximum(dark, 0.9 * _ink(iris, min(eye, 2.5)) * (ellipse <= 1.0))
        lid = np.abs(ellipse - 1.0) * max(eye, 0.5)
        dark = np.maximum(dark, 0.7 * _ink(lid, 0.6) * (np.abs(cc - cx) <= 7.5))

    mx, my = 42.0 + dx, 66.0 + dy
    u = (cc - mx) / width
    inside = np.abs(u) <= 1.0
    centre = my - curve * u * u - skew * (u + 1.0) / 2.0
    gap = opening * (1.0 - u * u) / 2.0
    upper, lower = centre - gap, centre + gap
    cavity = inside & (rr >= upper) & (rr <= lower)
    dark = np.maximum(dark, 0.85 * cavity)
    for lip in (upper, lower):
        dark = np.maximum(dark, 0.75 * _ink(np.abs(rr - lip), 1.0) * inside)

    return img * (1.0 - dark) + 20.0 * dark


def synth_face(label, rng: np.random.Generator, noise: float = 3.0) -> np.ndarray:
    params = dict(CLASS_SHAPES[Expression.parse(label)])
    for key, spread in (("tilt", 0.6), ("raise_", 0.5), ("eye", 0.25), ("curve", 0.5), ("width", 0.8), ("opening", 0.3), ("skew", 0.4)):
        params[key] += rng.normal(0.0, spread)
    params["width"] = max(params["width"], 4.0)
    params["opening"] = max(params["opening"], 0.0)
    dx, dy = rng.integers(-2, 3, size=2)
    img = render_face(**params, dx=float(dx), dy=float(dy))
    img += rng.normal(0.0, noise, size=img.shape)
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def synth_dataset(out_dir, per_class: int = 20, seed: int = 0) -> Path:
    """Write ``per_class`` faces for each of the seven classes plus
    ``manifest.csv`` into ``out_dir``; returns the manifest path."""
    from .pipeline import ManifestRecord, write_manifest

    if per_class < 2:
        raise ValueError(f"per_class must be at least 2, got {per_class}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"cannot write to {out}")
    rng = np.random.default_rng(seed)
    records = []
    for label in Expression:
        for i in range(per_class):
            name = f"{label.name.lower()}_{i:03d}.pgm"
            write_pgm(out / name, synth_face(label, rng))
            records.append(ManifestRecord(Path(name), label, None))
    manifest = out / "manifest.csv"
    write_manifest(manifest, records)
    return manifest
