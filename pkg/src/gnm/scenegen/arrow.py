"""Flat 2D stand-in for the Arrow Room scenes.

Four sprites on a black floor: an arrow, two sprites sharing a shape and one
sprite with a unique shape that the arrow points at. All sprites share one
material style; the arrow is painted last.
"""
from __future__ import annotations

import math

import numpy as np
from skimage.draw import polygon as fill_polygon

from .mnist import scene_rng
from .types import DatasetKind, ObjectSpec, SceneSpec

SHAPES = ("circle", "square", "triangle", "diamond")
STYLES = ("matte", "metal")
PALETTE = (
    (230, 40, 40), (40, 200, 60), (50, 90, 240), (235, 220, 40),
    (220, 60, 220), (40, 210, 220), (245, 140, 30), (200, 200, 200),
)
ARROW_RADIUS = 13
RADIUS_RANGE = (9, 13)
GAP = 6


def shape_vertices(shape: str, cx: float, cy: float, r: float, angle: float = 0.0) -> np.ndarray:
    """Polygon (K, 2) in (x, y) image coordinates; every vertex lies within ``r`` of the center."""
    if shape == "circle":
        t = np.linspace(0, 2 * np.pi, 48, endpoint=False)
        pts = np.stack([np.cos(t), np.sin(t)], 1)
    elif shape == "square":
        s = 1 / math.sqrt(2)
        pts = np.array([[-s, -s], [s, -s], [s, s], [-s, s]])
    elif shape == "triangle":
        pts = np.array([[0, -1], [math.sqrt(3) / 2, 0.5], [-math.sqrt(3) / 2, 0.5]])
    elif shape == "diamond":
        pts = np.array([[0, -1], [0.7, 0], [0, 1], [-0.7, 0]])
    elif shape == "arrow":
        # pointing along +x before rotation
        pts = np.array([[-0.96, -0.25], [0.2, -0.25], [0.2, -0.6], [1, 0],
                        [0.2, 0.6], [0.2, 0.25], [-0.96, 0.25]])
    else:
        raise ValueError(f"unknown shape {shape!r}")
    a = math.radians(angle)
    rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    return pts @ rot.T * r + np.array([cx, cy])


def shape_mask(shape: str, cx: float, cy: float, r: float, angle: float, size: int) -> np.ndarray:
    v = shape_vertices(shape, cx, cy, r, angle)
    # pixel (row, col) covers [row, row+1); sample polygon at pixel centers
    rr, cc = fill_polygon(v[:, 1] - 0.5, v[:, 0] - 0.5, shape=(size, size))
    m = np.zeros((size, size), bool)
    m[rr, cc] = True
    return m


def _shade(mask, color, style, cx, cy, r):
    h, w = mask.shape
    col = np.asarray(color, np.float32) / 255.0
    if style == "matte":
        factor = np.full((h, w), 0.85, np.float32)
    else:
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float32) + 0.5
        d = np.hypot(xx - (cx - 0.35 * r), yy - (cy - 0.35 * r)) / (1.6 * r)
        factor = 0.65 + 0.35 * np.clip(1 - d, 0, 1) ** 2 + 0.3 * (d < 0.2)
    return np.clip(factor[..., None] * col, 0, 1) * mask[..., None]


def _layout(rng, radii, size, margin=2):
    for _ in range(10000):
        centers = [rng.uniform(r + margin, size - r - margin, size=2) for r in radii]
        ok = all(np.hypot(*(centers[i] - centers[j])) >= radii[i] + radii[j] + GAP
                 for i in range(len(radii)) for j in range(i))
        if ok:
            return centers
    raise RuntimeError("could not place sprites without overlap")


def arrow_scene(rng: np.random.Generator, image_size: int = 128):
    S = image_size
    pair_shape, unique_shape = rng.choice(len(SHAPES), size=2, replace=False)
    style = STYLES[int(rng.integers(len(STYLES)))]
    radii = [float(rng.integers(RADIUS_RANGE[0], RADIUS_RANGE[1] + 1)) for _ in range(3)] + [float(ARROW_RADIUS)]
    centers = _layout(rng, radii, S)
    sprites = [(SHAPES[pair_shape], "pair_shape"), (SHAPES[pair_shape], "pair_shape"),
               (SHAPES[unique_shape], "unique_shape")]
    order = rng.permutation(3)
    ux, uy = centers[2]
    ax, ay = centers[3]
    angle = math.degrees(math.atan2(uy - ay, ux - ax))
    entries = [(sprites[i][0], sprites[i][1], centers[i], radii[i], 0.0) for i in order]
    entries.append(("arrow", "arrow", centers[3], radii[3], angle))

    canvas = np.zeros((S, S, 3), np.float32)
    objects = []
    for shape, role, (cx, cy), r, ang in entries:
        color = PALETTE[int(rng.integers(len(PALETTE)))]
        mask = shape_mask(shape, cx, cy, r, ang, S)
        canvas = np.where(mask[..., None], _shade(mask, color, style, cx, cy, r), canvas)
        ys, xs = np.nonzero(mask)
        objects.append(ObjectSpec(
            cls=shape, role=role, center=(float(cx), float(cy)), color=tuple(int(c) for c in color),
            bbox=(float(min(xs.min(), cx)), float(min(ys.min(), cy)),
                  float(max(xs.max() + 1, cx)), float(max(ys.max() + 1, cy))),
            style=style, orientation=float(ang) if role == "arrow" else None,
        ))
    image = np.round(canvas * 255).astype(np.uint8)
    return image, SceneSpec(objects, DatasetKind.ARROW2D, S)


def gen_arrow2d(count: int, seed: int, image_size: int = 128, start: int = 0):
    if count < 1:
        raise ValueError("count must be >= 1")
    return [arrow_scene(scene_rng(seed, start + i), image_size) for i in range(count)]
