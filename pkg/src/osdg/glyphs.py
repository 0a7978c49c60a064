"""Procedural handwritten-style digits for when no MNIST files are on hand.

Each digit is a handful of strokes (polylines and elliptic arcs) in a unit
box. A per-sample random affine map, stroke jitter and pen width give the
set its variability; strokes are rasterized through a distance field and
quantized to u8 exactly like IDX pixels.
"""

from __future__ import annotations

import numpy as np

from .datasets import SIDE, RawDigitSet
from .numerics import rng_stream


def _arc(cx, cy, rx, ry, t0, t1):
    return ("arc", cx, cy, rx, ry, t0, t1)


def _line(*pts):
    return ("line", *pts)


# y grows downward; angle 270 is the top of an ellipse.
STROKES = {
    0: [_arc(0.5, 0.5, 0.27, 0.40, 0, 360)],
    1: [_line((0.36, 0.24), (0.54, 0.1), (0.54, 0.9))],
    2: [_arc(0.5, 0.33, 0.26, 0.23, 190, 400), _line((0.70, 0.48), (0.22, 0.9), (0.82, 0.9))],
    3: [_arc(0.5, 0.3, 0.24, 0.2, 200, 450), _arc(0.5, 0.7, 0.27, 0.2, 270, 520)],
    4: [_line((0.64, 0.1), (0.18, 0.64), (0.84, 0.64)), _line((0.64, 0.1), (0.64, 0.92))],
    5: [_line((0.76, 0.1), (0.32, 0.1), (0.28, 0.47)), _arc(0.5, 0.66, 0.27, 0.24, 225, 520)],
    6: [_arc(0.72, 0.6, 0.46, 0.5, 250, 180), _arc(0.52, 0.7, 0.25, 0.2, 0, 360)],
    7: [_line((0.2, 0.12), (0.8, 0.12), (0.42, 0.9))],
    8: [_arc(0.5, 0.29, 0.2, 0.18, 0, 360), _arc(0.5, 0.7, 0.25, 0.21, 0, 360)],
    9: [_arc(0.5, 0.32, 0.24, 0.21, 0, 360), _line((0.74, 0.3), (0.66, 0.9))],
}

_GRID = (np.stack(np.meshgrid(np.arange(SIDE), np.arange(SIDE), indexing="xy"), -1)
         .reshape(-1, 2) + 0.5)


def _stroke_points(stroke, rng, jitter):
    kind, *args = stroke
    if kind == "arc":
        cx, cy, rx, ry, t0, t1 = args
        cx, cy = cx + rng.normal(0, jitter), cy + rng.normal(0, jitter)
        rx, ry = rx * rng.uniform(0.85, 1.15), ry * rng.uniform(0.9, 1.1)
        t = np.deg2rad(np.linspace(t0, t1, 25))
        pts = np.stack([cx + rx * np.cos(t), cy + ry * np.sin(t)], 1)
    else:
        pts = np.asarray(args, dtype=float) + rng.normal(0, jitter, size=(len(args), 2))
    return pts[:-1], pts[1:]


def _segment_distance(p, a, b):
    # p [P,2], a/b [S,2] -> min distance from each p to the polyline
    ab = b - a
    ap = p[:, None, :] - a[None, :, :]
    t = np.clip((ap * ab).sum(-1) / np.maximum((ab * ab).sum(-1), 1e-12), 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.sqrt(((p[:, None, :] - closest) ** 2).sum(-1).min(1))


def render_digit(digit: int, rng: np.random.Generator) -> np.ndarray:
    """One 28x28 u8 glyph."""
    pieces = [_stroke_points(s, rng, 0.03) for s in STROKES[digit]]
    starts = np.concatenate([a for a, _ in pieces])
    ends = np.concatenate([b for _, b in pieces])
    angle = np.deg2rad(rng.uniform(-14, 14))
    shear = rng.uniform(-0.25, 0.25)
    sx, sy = rng.uniform(0.75, 1.05), rng.uniform(0.85, 1.05)
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    A = rot @ np.array([[1.0, shear], [0.0, 1.0]]) @ np.diag([sx, sy])
    shift = rng.uniform(-1.5, 1.5, size=2)

    def to_pixels(q):
        return (q - 0.5) @ A.T * 20.0 + SIDE / 2 + shift

    width = rng.uniform(1.0, 2.4)
    dist = _segment_distance(_GRID, to_pixels(starts), to_pixels(ends))
    ink = np.clip(width / 2 + 0.6 - dist, 0.0, 1.0)
    return np.round(ink.reshape(SIDE, SIDE) * 255).astype(np.uint8)


def synth_digits_u8(n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Balanced-in-expectation labels, u8 images [n, 28, 28]."""
    rng = rng_stream(seed)
    labels = rng.integers(0, 10, size=n)
    images = np.stack([render_digit(int(d), rng) for d in labels]) if n else \
        np.zeros((0, SIDE, SIDE), np.uint8)
    return images, labels.astype(np.uint8)


def synth_digits(n: int, seed: int = 0) -> RawDigitSet:
    images, labels = synth_digits_u8(n, seed)
    return RawDigitSet(images.astype(np.float64) / 255.0, labels.astype(np.int64))
