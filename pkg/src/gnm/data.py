"""Dataset directories as training tensors, with a step-indexed batch order."""
from __future__ import annotations

import numpy as np
import torch
from torch.nn import functional as F

from .scenegen.store import SceneDataset


def to_tensor(images_u8: np.ndarray, image_size: int | None = None) -> torch.Tensor:
    """(N, H, W, 3) uint8 -> (N, 3, S, S) float in [0, 1], area-downsampled when ``S < H``."""
    x = torch.as_tensor(np.ascontiguousarray(images_u8)).permute(0, 3, 1, 2).float() / 255.0
    if image_size is not None and x.shape[-1] != image_size:
        mode = "area" if image_size < x.shape[-1] else "bilinear"
        x = F.interpolate(x, size=(image_size, image_size), mode=mode,
                          **({} if mode == "area" else {"align_corners": False}))
    return x.clamp(0, 1)


def batch_indices(n: int, batch: int, seed: int, step: int) -> np.ndarray:
    """Batch ``step`` of a run depends only on ``(seed, step)``, so resumed runs see the same data."""
    return np.random.default_rng([int(seed), int(step), 1]).integers(n, size=batch)


class ImageStore:
    """All images of a dataset directory at the model's resolution, stored as uint8."""

    def __init__(self, dataset: SceneDataset, image_size: int, limit: int | None = None, chunk: int = 512):
        n = len(dataset) if limit is None else min(limit, len(dataset))
        parts = []
        for i in range(0, n, chunk):
            t = to_tensor(dataset.images(range(i, min(i + chunk, n))), image_size)
            parts.append((t * 255).round().to(torch.uint8))
        self.images = torch.cat(parts) if parts else torch.zeros(0, 3, image_size, image_size, dtype=torch.uint8)
        self.dataset = dataset

    def __len__(self):
        return len(self.images)

    def get(self, idx) -> torch.Tensor:
        return self.images[torch.as_tensor(idx)].float() / 255.0

    def batch(self, batch: int, seed: int, step: int) -> torch.Tensor:
        return self.get(batch_indices(len(self), batch, seed, step))
