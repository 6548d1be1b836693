"""Procedural multi-digit MNIST scenes with a known dependency structure.

Images are ``uint8`` arrays of shape ``(S, S, 3)``; digits are white on black
and composited with a per-pixel max.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage.transform import resize

from .idx import DigitBank
from .types import QUADRANTS, DatasetKind, ObjectSpec, SceneSpec

# Clockwise class sets for MNIST-10, TL first.
MNIST10_SETS = {"TL": (0, 1), "TR": (2, 3, 4), "BR": (8, 9), "BL": (5, 6, 7)}
MNIST10_COUNTS = {"TL": 2, "TR": 3, "BR": 2, "BL": 3}
DIAGONAL = {"TL": "BR", "BR": "TL", "TR": "BL", "BL": "TR"}
INK_THRESHOLD = 0.2


@dataclass
class LayoutConfig:
    image_size: int = 128
    stamp: int = 28
    margin: int = 2
    # Minimum Chebyshev distance between stamps sharing a quadrant (MNIST-10).
    min_separation: int = 24
    max_tries: int = 1000
    swap_prob: float = 0.5

    @property
    def quadrant(self) -> int:
        return self.image_size // 2

    @property
    def offset_range(self) -> tuple[int, int]:
        lo = self.margin
        hi = self.quadrant - self.margin - self.stamp
        if hi < lo:
            raise ValueError(f"stamp {self.stamp} does not fit a {self.quadrant}px quadrant")
        return lo, hi


def quadrant_origin(quadrant: str, image_size: int) -> tuple[int, int]:
    q = image_size // 2
    return {"TL": (0, 0), "TR": (q, 0), "BR": (q, q), "BL": (0, q)}[quadrant]


def quadrant_of(x: float, y: float, image_size: int) -> str:
    c = image_size / 2
    if y < c:
        return "TL" if x < c else "TR"
    return "BL" if x < c else "BR"


def scene_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def _stamp(bank: DigitBank, cls: int, rng: np.random.Generator, size: int) -> np.ndarray:
    idx = bank.indices_of(int(cls))
    img = bank.images[idx[rng.integers(len(idx))]]
    if size != img.shape[0]:
        img = resize(img, (size, size), order=1, anti_aliasing=True).astype(np.float32)
    return img


def _place(canvas: np.ndarray, stamp: np.ndarray, x0: int, y0: int) -> tuple[float, ...]:
    h, w = stamp.shape
    region = canvas[y0:y0 + h, x0:x0 + w]
    np.maximum(region, stamp, out=region)
    ys, xs = np.nonzero(stamp > INK_THRESHOLD)
    cx, cy = x0 + w / 2, y0 + h / 2
    if len(xs) == 0:
        return (cx, cy, cx, cy)
    # bbox is the ink extent, grown if needed so that it contains the stamp center
    return (float(min(x0 + xs.min(), cx)), float(min(y0 + ys.min(), cy)),
            float(max(x0 + xs.max() + 1, cx)), float(max(y0 + ys.max() + 1, cy)))


def _to_uint8(canvas: np.ndarray) -> np.ndarray:
    gray = np.round(np.clip(canvas, 0, 1) * 255).astype(np.uint8)
    return np.repeat(gray[:, :, None], 3, axis=2)


def _digit(bank, canvas, cls, quadrant, x0, y0, rng, cfg) -> ObjectSpec:
    bbox = _place(canvas, _stamp(bank, cls, rng, cfg.stamp), x0, y0)
    return ObjectSpec(cls=int(cls), quadrant=quadrant, center=(x0 + cfg.stamp / 2, y0 + cfg.stamp / 2),
                      bbox=bbox, color=(255, 255, 255), role="digit")


def mnist4_scene(bank: DigitBank, rng: np.random.Generator, cfg: LayoutConfig):
    S, st = cfg.image_size, cfg.stamp
    lo, hi = cfg.offset_range
    start = int(rng.integers(0, 7))
    x0, y0 = (int(v) for v in rng.integers(lo, hi + 1, size=2))
    # mirror the TL stamp about both image axes
    corners = {"TL": (x0, y0), "TR": (S - x0 - st, y0), "BR": (S - x0 - st, S - y0 - st), "BL": (x0, S - y0 - st)}
    canvas = np.zeros((S, S), np.float32)
    objects = [_digit(bank, canvas, start + k, q, *corners[q], rng, cfg) for k, q in enumerate(QUADRANTS)]
    return _to_uint8(canvas), SceneSpec(objects, DatasetKind.MNIST4, S)


def _offsets(n: int, rng: np.random.Generator, cfg: LayoutConfig) -> list[tuple[int, int]]:
    lo, hi = cfg.offset_range
    pts = rng.integers(lo, hi + 1, size=(n, 2))
    for _ in range(cfg.max_tries):
        d = np.abs(pts[:, None, :] - pts[None, :, :]).max(-1)
        if n < 2 or d[np.triu_indices(n, 1)].min() >= cfg.min_separation:
            break
        pts = rng.integers(lo, hi + 1, size=(n, 2))
    return [(int(a), int(b)) for a, b in pts]


def mnist10_scene(bank: DigitBank, rng: np.random.Generator, cfg: LayoutConfig):
    S = cfg.image_size
    shared = _offsets(2, rng, cfg)
    offsets = {"TL": shared, "BR": shared, "TR": _offsets(3, rng, cfg), "BL": _offsets(3, rng, cfg)}
    classes = {q: [int(rng.choice(MNIST10_SETS[q])) for _ in range(MNIST10_COUNTS[q])] for q in QUADRANTS}
    swapped = bool(rng.random() < cfg.swap_prob)
    canvas = np.zeros((S, S), np.float32)
    objects = []
    for home in QUADRANTS:
        # home = quadrant whose class set / offsets are used; dest = where it is drawn
        dest = DIAGONAL[home] if swapped else home
        ox, oy = quadrant_origin(dest, S)
        for cls, (dx, dy) in zip(classes[home], offsets[home]):
            objects.append((QUADRANTS.index(dest), _digit(bank, canvas, cls, dest, ox + dx, oy + dy, rng, cfg)))
    objects = [o for _, o in sorted(objects, key=lambda t: t[0])]
    return _to_uint8(canvas), SceneSpec(objects, DatasetKind.MNIST10, S, swapped=swapped)


def _generate(scene_fn, bank, count, seed, cfg, start):
    if count < 1:
        raise ValueError("count must be >= 1")
    cfg = cfg or LayoutConfig()
    return [scene_fn(bank, scene_rng(seed, start + i), cfg) for i in range(count)]


def gen_mnist4(bank: DigitBank, count: int, seed: int, cfg: LayoutConfig | None = None, start: int = 0):
    return _generate(mnist4_scene, bank, count, seed, cfg, start)


def gen_mnist10(bank: DigitBank, count: int, seed: int, cfg: LayoutConfig | None = None, start: int = 0):
    return _generate(mnist10_scene, bank, count, seed, cfg, start)


def mnist4_10_scene(bank, rng, cfg):
    four = rng.random() < 0.5
    image, spec = (mnist4_scene if four else mnist10_scene)(bank, rng, cfg)
    spec.dataset_kind = DatasetKind.MNIST4_10
    spec.meta["variant"] = "MNIST4" if four else "MNIST10"
    return image, spec


def gen_mnist4_10(bank: DigitBank, count: int, seed: int, cfg: LayoutConfig | None = None, start: int = 0):
    return _generate(mnist4_10_scene, bank, count, seed, cfg, start)
