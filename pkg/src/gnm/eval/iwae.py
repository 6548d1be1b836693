"""Importance-weighted log-likelihood."""
from __future__ import annotations

import math

import numpy as np
import torch


class NonFiniteWeight(FloatingPointError):
    pass


def log_mean_exp(log_w: torch.Tensor, dim: int = 0) -> torch.Tensor:
    return torch.logsumexp(log_w, dim) - math.log(log_w.shape[dim])


def log_likelihood_iwae(x, model, K: int = 100, seed: int = 0) -> torch.Tensor:
    """Per-image estimate ``log (1/K) sum_k p(x, z_k) / q(z_k | x)`` in nats.

    ``model`` must provide ``importance_log_weights(x, K, seed) -> (K, B)``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    log_w = model.importance_log_weights(x, K, seed)
    if not torch.isfinite(log_w).all():
        raise NonFiniteWeight("importance weights contain NaN or inf")
    return log_mean_exp(log_w.double(), 0)


class ToyMixture:
    """Discrete latent z in {0..S-1}; x | z ~ N(mu_z, sigma^2 I).

    The proposal ``q(z | x)`` mixes the exact posterior with a uniform
    distribution, so importance weights are not constant.
    """

    def __init__(self, n_states: int = 4, dim: int = 3, sigma: float = 1.0, mix: float = 0.5, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.logits = torch.tensor(rng.normal(size=n_states))
        self.mu = torch.tensor(rng.normal(scale=2.0, size=(n_states, dim)))
        self.sigma, self.mix, self.dim = sigma, mix, dim

    def log_joint_all(self, x):
        """(B, S) table of log p(x, z) for every state."""
        prior = torch.log_softmax(self.logits, 0)
        d = x[:, None, :] - self.mu[None]
        lik = (-0.5 * (d / self.sigma) ** 2 - math.log(self.sigma) - 0.5 * math.log(2 * math.pi)).sum(-1)
        return prior[None] + lik

    def exact_log_likelihood(self, x):
        return torch.logsumexp(self.log_joint_all(x), 1)

    def log_q_all(self, x):
        post = torch.softmax(self.log_joint_all(x), 1)
        S = post.shape[1]
        return torch.log((1 - self.mix) * post + self.mix / S)

    def sample(self, n: int, seed: int = 0):
        g = torch.Generator().manual_seed(seed)
        z = torch.multinomial(torch.softmax(self.logits, 0), n, replacement=True, generator=g)
        return self.mu[z] + self.sigma * torch.randn(n, self.dim, generator=g, dtype=self.mu.dtype)

    def importance_log_weights(self, x, K: int, seed: int = 0):
        g = torch.Generator().manual_seed(seed)
        log_q = self.log_q_all(x)
        z = torch.multinomial(log_q.exp(), K, replacement=True, generator=g).T          # (K, B)
        joint = self.log_joint_all(x)
        return joint.gather(1, z.T).T - log_q.gather(1, z.T).T
