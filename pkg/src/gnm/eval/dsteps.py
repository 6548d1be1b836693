"""Discriminability: how many training steps a fresh real-vs-generated classifier needs."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch import nn

Stream = Callable[[int, np.random.Generator], torch.Tensor]


class PoolStream:
    """Samples with replacement from a fixed (N, 3, H, W) image tensor."""

    def __init__(self, images: torch.Tensor):
        self.images = images.float()

    def __call__(self, n, rng):
        return self.images[torch.as_tensor(rng.integers(len(self.images), size=n))]

    def pooled(self, factor: int) -> "PoolStream":
        """Same stream with the discriminator's input pooling applied once up front."""
        return PoolStream(nn.functional.avg_pool2d(self.images, factor)) if factor > 1 else self


class Discriminator(nn.Module):
    """Fixed average pooling to 32x32, four stride-2 convolutions and a linear read-out."""

    def __init__(self, image_size: int = 128, width: int = 8):
        super().__init__()
        self.factor = max(image_size // 32, 1)
        layers, c = [], 3
        for out in (width, 2 * width, 4 * width, 4 * width):
            layers += [nn.Conv2d(c, out, 4, 2, padding=1), nn.LeakyReLU(0.2)]
            c = out
        self.body = nn.Sequential(*layers, nn.AdaptiveAvgPool2d(1), nn.Flatten(), nn.Linear(c, 1))

    def pool(self, x):
        return nn.functional.avg_pool2d(x, self.factor) if self.factor > 1 else x

    def forward(self, x):
        return self.body(self.pool(x))


def pool_stream(images) -> PoolStream:
    """Stream over an (N, 3, H, W) float tensor or an (N, H, W, 3) uint8 array."""
    if not torch.is_tensor(images):
        images = torch.as_tensor(np.asarray(images)).permute(0, 3, 1, 2).float() / 255.0
    return PoolStream(images)


def noise_stream(image_size: int = 128) -> Stream:
    def draw(n, rng):
        return torch.as_tensor(rng.random((n, 3, image_size, image_size)), dtype=torch.float32)
    return draw


def discriminability(real_stream: Stream, gen_stream: Stream, cap: int = 20_000, batch: int = 64,
                     heldout: int = 256, lr: float = 1e-3, target: float = 0.9, seed: int = 0,
                     image_size: int | None = None, trace: list | None = None) -> int:
    """First training step at which held-out accuracy reaches ``target``, else ``cap``.

    The held-out set (half real, half generated) is drawn once; each step
    trains on a fresh balanced batch and is followed by a held-out check.
    """
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)
    if image_size is None:
        image_size = real_stream(1, np.random.default_rng(0)).shape[-1]
    model = Discriminator(image_size)

    def prepare(stream):
        # pooling is parameter-free, so fixed image pools can be pooled once
        if hasattr(stream, "pooled"):
            return stream.pooled(model.factor)
        return lambda n, r: model.pool(stream(n, r))
    real_stream, gen_stream = prepare(real_stream), prepare(gen_stream)
    hx = torch.cat([real_stream(heldout // 2, rng), gen_stream(heldout - heldout // 2, rng)])
    hy = torch.cat([torch.ones(heldout // 2), torch.zeros(heldout - heldout // 2)])
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    y = torch.cat([torch.ones(batch // 2), torch.zeros(batch - batch // 2)])
    for step in range(1, cap + 1):
        model.train()
        x = torch.cat([real_stream(batch // 2, rng), gen_stream(batch - batch // 2, rng)])
        loss = nn.functional.binary_cross_entropy_with_logits(model.body(x)[:, 0], y)
        opt.zero_grad()
        loss.backward()
        opt.step()
        model.eval()
        with torch.no_grad():
            acc = float(((model.body(hx)[:, 0] > 0).float() == hy).float().mean())
        if trace is not None:
            trace.append((step, loss.item(), acc))
        if acc >= target:
            return step
    return cap


def write_trace(path, trace):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss", "heldout_acc"])
        w.writerows(trace)
