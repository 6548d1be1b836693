"""Offline digit bank used when the MNIST IDX files are unavailable.

The 8x8 scikit-learn digits are upsampled to a 20x20 box and centred by mass
in a 28x28 frame, the same normalisation MNIST uses. Extra samples are
produced with small random affine jitter.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage
from skimage.transform import AffineTransform, resize, warp
from sklearn.datasets import load_digits

from .idx import DigitBank


def _to_mnist_frame(img8: np.ndarray) -> np.ndarray:
    big = resize(img8 / 16.0, (20, 20), order=3, anti_aliasing=False, mode="edge")
    big = np.clip((big - 0.1) / 0.8, 0, 1)
    frame = np.zeros((28, 28), np.float64)
    frame[4:24, 4:24] = big
    cy, cx = ndimage.center_of_mass(frame)
    return ndimage.shift(frame, (13.5 - cy, 13.5 - cx), order=1, mode="constant")


def _jitter(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    rot = np.deg2rad(rng.uniform(-12, 12))
    scale = rng.uniform(0.85, 1.1)
    shear = np.deg2rad(rng.uniform(-8, 8))
    c = np.array([13.5, 13.5])
    t = (AffineTransform(translation=-c) + AffineTransform(rotation=rot, scale=scale, shear=shear)
         + AffineTransform(translation=c + rng.uniform(-1, 1, 2)))
    return warp(img, t.inverse, order=1, mode="constant")


def fallback_digit_banks(copies: int = 8, seed: int = 0, test_fraction: float = 0.2):
    """Return ``(train, test)`` banks as uint8 ``(N, 28, 28)`` images with labels.

    Source digits are split before augmentation so no writer's sample appears
    in both splits.
    """
    data = load_digits()
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(data.target))
    n_test = int(len(order) * test_fraction)
    splits = {"test": order[:n_test], "train": order[n_test:]}
    out = {}
    for name, idx in splits.items():
        images, labels = [], []
        for i in idx:
            base = _to_mnist_frame(data.images[i])
            images.append(base)
            labels.append(data.target[i])
            for _ in range(copies - 1):
                images.append(_jitter(base, rng))
                labels.append(data.target[i])
        arr = np.round(np.clip(np.stack(images), 0, 1) * 255).astype(np.uint8)
        out[name] = (arr, np.asarray(labels, np.uint8))
    return out["train"], out["test"]


def as_bank(images_u8: np.ndarray, labels: np.ndarray, split: str = "train") -> DigitBank:
    return DigitBank(images_u8.astype(np.float32) / 255.0, labels.astype(np.int64), split)
