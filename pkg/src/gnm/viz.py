"""PNG montages and decomposition panels."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw

BOX_COLOR = (0, 255, 0)


def to_uint8(images) -> np.ndarray:
    """(N, 3, H, W) float tensor in [0, 1] -> (N, H, W, 3) uint8."""
    x = images.detach().cpu().float().clamp(0, 1) if torch.is_tensor(images) else torch.as_tensor(images)
    if x.dim() == 3:
        x = x[None]
    if x.shape[1] == 1:
        x = x.expand(-1, 3, -1, -1)
    return (x.permute(0, 2, 3, 1) * 255).round().to(torch.uint8).numpy()


def montage(images, ncol: int | None = None, pad: int = 2) -> Image.Image:
    tiles = to_uint8(images)
    n, h, w, _ = tiles.shape
    ncol = ncol or math.ceil(math.sqrt(n))
    nrow = math.ceil(n / ncol)
    canvas = np.full((nrow * (h + pad) + pad, ncol * (w + pad) + pad, 3), 64, np.uint8)
    for i, t in enumerate(tiles):
        r, c = divmod(i, ncol)
        canvas[pad + r * (h + pad):pad + r * (h + pad) + h, pad + c * (w + pad):pad + c * (w + pad) + w] = t
    return Image.fromarray(canvas)


def save_montage(path, images, ncol: int | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    montage(images, ncol).save(path)
    return path


def draw_boxes(image: Image.Image, boxes, color=BOX_COLOR) -> Image.Image:
    """Outline xyxy ``boxes`` (pixel units of ``image``) on a copy of ``image``."""
    out = image.copy()
    d = ImageDraw.Draw(out)
    for x0, y0, x1, y1 in np.asarray(boxes, dtype=float).reshape(-1, 4):
        d.rectangle([x0, y0, x1 - 1, y1 - 1], outline=color)
    return out
