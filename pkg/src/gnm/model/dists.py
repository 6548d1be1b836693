"""Sampling helpers with an explicit random stream, and elementwise log densities."""
from __future__ import annotations

import math

import torch

LOG_2PI = math.log(2 * math.pi)


class Noise:
    """A seeded source of reparameterisation noise.

    ``Noise(None)`` is the deterministic stream: every Gaussian draw returns
    its mean and relaxed presence returns the sigmoid of its logit.
    """

    def __init__(self, seed: int | None = None, device="cpu"):
        self.deterministic = seed is None
        self.generator = None
        if seed is not None:
            self.generator = torch.Generator(device=device)
            self.generator.manual_seed(int(seed))

    def normal(self, like: torch.Tensor) -> torch.Tensor:
        if self.deterministic:
            return torch.zeros_like(like)
        return torch.randn(like.shape, generator=self.generator, dtype=like.dtype, device=like.device)

    def uniform(self, like: torch.Tensor) -> torch.Tensor:
        if self.deterministic:
            return torch.full_like(like, 0.5)
        return torch.rand(like.shape, generator=self.generator, dtype=like.dtype, device=like.device)

    def get_state(self):
        return None if self.generator is None else self.generator.get_state()


def gaussian_sample(mu, sigma, noise: Noise):
    return mu + sigma * noise.normal(mu)


def relaxed_bernoulli_sample(logits, temperature: float, noise: Noise, eps: float = 1e-6):
    """Binary concrete sample in (0, 1)."""
    u = noise.uniform(logits).clamp(eps, 1 - eps)
    return torch.sigmoid((logits + torch.log(u) - torch.log1p(-u)) / temperature)


def bernoulli_sample(logits, noise: Noise):
    if noise.deterministic:
        return (logits >= 0).to(logits.dtype)
    return (noise.uniform(logits) < torch.sigmoid(logits)).to(logits.dtype)


def gaussian_log_prob(x, mu, sigma):
    return -0.5 * ((x - mu) / sigma) ** 2 - torch.log(sigma) - 0.5 * LOG_2PI


def bernoulli_log_prob(x, logits):
    # log p(x) for x in {0, 1} from logits, numerically stable
    return x * torch.nn.functional.logsigmoid(logits) + (1 - x) * torch.nn.functional.logsigmoid(-logits)
