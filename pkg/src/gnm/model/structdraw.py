"""Autoregressive drawing of the global feature map.

Each step draws a latent ``z_l`` (from the posterior during inference, from
the learned step prior during generation), decodes it to a feature map,
advances a decoder ConvLSTM and adds a convolutional read-out of the hidden
state to the running map ``f``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from ..config import ModelConfig
from .dists import Noise, gaussian_sample
from .nets import MLP, ConvLSTMCell, check_finite, positive, split_gaussian


@dataclass
class GlobalLatent:
    z: torch.Tensor                      # (B, L, d)
    prior_mu: torch.Tensor
    prior_sigma: torch.Tensor
    f: torch.Tensor                      # (B, C, H, W), the final drawn map
    drawn: torch.Tensor                  # (B, L, C, H, W), per-step read-outs
    f_steps: torch.Tensor                # (B, L, C, H, W), running sums f_1..f_L
    post_mu: Optional[torch.Tensor] = None
    post_sigma: Optional[torch.Tensor] = None
    h_dec: Optional[torch.Tensor] = None

    @property
    def z_flat(self) -> torch.Tensor:
        return self.z.reshape(self.z.shape[0], -1)

    @property
    def steps(self) -> int:
        return self.z.shape[1]


class InteractionHead(nn.Module):
    """Maps a (B, C, H, W) hidden state to Gaussian parameters of a d-dim step latent.

    ``kind="mlp"`` mixes every grid position through an MLP; ``kind="none"``
    uses an independent 1x1 convolution per position, each position owning
    ``d / (H*W)`` latent dimensions.
    """

    def __init__(self, channels: int, grid: int, d: int, hidden, kind: str = "mlp"):
        super().__init__()
        self.kind, self.d, self.grid = kind, d, grid
        if kind == "mlp":
            self.net = MLP(channels * grid * grid, hidden, 2 * d)
        elif kind == "none":
            if d % (grid * grid):
                raise ValueError("latent size must be divisible by the number of grid positions")
            self.k = d // (grid * grid)
            self.net = nn.Conv2d(channels, 2 * self.k, 1)
        else:
            raise ValueError(f"unknown interaction {kind!r}")

    def forward(self, h):
        B = h.shape[0]
        if self.kind == "mlp":
            return split_gaussian(self.net(h.reshape(B, -1)))
        out = self.net(h)
        mu = out[:, : self.k].reshape(B, self.d)
        return mu, positive(out[:, self.k:].reshape(B, self.d))


class StructDRAW(nn.Module):
    def __init__(self, cfg: ModelConfig, interaction: str = "mlp"):
        super().__init__()
        C, G = cfg.feat_dim, cfg.grid
        self.cfg = cfg
        self.enc_lstm = ConvLSTMCell(3 * C, C)
        self.dec_lstm = ConvLSTMCell(C, C)
        self.post_head = InteractionHead(C, G, cfg.d_g, cfg.interaction_hidden, interaction)
        self.prior_head = InteractionHead(C, G, cfg.d_g, cfg.interaction_hidden, interaction)
        self.z_decoder = MLP(cfg.d_g, cfg.zg_decoder_hidden, C * G * G)
        self.out_cnn = nn.Conv2d(C, C, 3, padding=1)

    def _run(self, fx, batch: int, noise: Noise, steps: int | None, fixed_z=None):
        cfg = self.cfg
        C, G = cfg.feat_dim, cfg.grid
        L = steps or cfg.draw_steps
        ref = fx if fx is not None else next(self.parameters())
        ref = ref.new_zeros(batch, C, G, G)
        h_dec, c_dec = self.dec_lstm.init_state(ref, (G, G))
        enc_state = self.enc_lstm.init_state(ref, (G, G))
        f = ref
        out = {k: [] for k in ("z", "pm", "ps", "qm", "qs", "drawn", "f", "h")}
        for _ in range(L):
            p_mu, p_sigma = self.prior_head(h_dec)
            if fixed_z is not None:
                z = fixed_z[:, len(out["z"])]
            elif fx is not None:
                enc_state = self.enc_lstm(torch.cat([h_dec, fx, fx - f], 1), enc_state)
                q_mu, q_sigma = self.post_head(enc_state[0])
                check_finite(q_mu, q_sigma, what="global posterior")
                z = gaussian_sample(q_mu, q_sigma, noise)
                out["qm"].append(q_mu)
                out["qs"].append(q_sigma)
            else:
                z = gaussian_sample(p_mu, p_sigma, noise)
            d = self.z_decoder(z).reshape(batch, C, G, G)
            h_dec, c_dec = self.dec_lstm(d, (h_dec, c_dec))
            drawn = self.out_cnn(h_dec)
            f = f + drawn
            for key, val in (("z", z), ("pm", p_mu), ("ps", p_sigma), ("drawn", drawn), ("f", f), ("h", h_dec)):
                out[key].append(val)
        stack = {k: torch.stack(v, 1) if v else None for k, v in out.items()}
        return GlobalLatent(z=stack["z"], prior_mu=stack["pm"], prior_sigma=stack["ps"], f=f,
                            drawn=stack["drawn"], f_steps=stack["f"], post_mu=stack["qm"],
                            post_sigma=stack["qs"], h_dec=stack["h"])

    def infer(self, fx, noise: Noise, steps: int | None = None) -> GlobalLatent:
        return self._run(fx, fx.shape[0], noise, steps)

    def sample_prior(self, batch: int, noise: Noise, steps: int | None = None) -> GlobalLatent:
        return self._run(None, batch, noise, steps)

    def rollout(self, z: torch.Tensor) -> GlobalLatent:
        """Decode a given (B, L, d) latent sequence; prior parameters are still reported."""
        return self._run(None, z.shape[0], Noise(None), z.shape[1], fixed_z=z)


class GaussianGlobal(nn.Module):
    """Single Gaussian global latent N(0, I) of size ``d_g * L`` decoded straight to ``f``."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        C, G = cfg.feat_dim, cfg.grid
        self.cfg = cfg
        self.dim = cfg.d_g * cfg.draw_steps
        self.post_head = MLP(C * G * G, cfg.interaction_hidden, 2 * self.dim)
        self.z_decoder = MLP(self.dim, cfg.zg_decoder_hidden, C * G * G)
        self.out_cnn = nn.Conv2d(C, C, 3, padding=1)

    def _decode(self, z, prior_mu, prior_sigma, post=(None, None)):
        B = z.shape[0]
        C, G = self.cfg.feat_dim, self.cfg.grid
        f = self.out_cnn(self.z_decoder(z).reshape(B, C, G, G))
        return GlobalLatent(z=z[:, None], prior_mu=prior_mu[:, None], prior_sigma=prior_sigma[:, None], f=f,
                            drawn=f[:, None], f_steps=f[:, None],
                            post_mu=None if post[0] is None else post[0][:, None],
                            post_sigma=None if post[1] is None else post[1][:, None])

    def infer(self, fx, noise: Noise, steps=None) -> GlobalLatent:
        q_mu, q_sigma = split_gaussian(self.post_head(fx.reshape(fx.shape[0], -1)))
        check_finite(q_mu, q_sigma, what="global posterior")
        z = gaussian_sample(q_mu, q_sigma, noise)
        return self._decode(z, torch.zeros_like(z), torch.ones_like(z), (q_mu, q_sigma))

    def sample_prior(self, batch: int, noise: Noise, steps=None) -> GlobalLatent:
        ref = next(self.parameters())
        mu = ref.new_zeros(batch, self.dim)
        sigma = torch.ones_like(mu)
        return self._decode(gaussian_sample(mu, sigma, noise), mu, sigma)

    def rollout(self, z: torch.Tensor) -> GlobalLatent:
        z = z.reshape(z.shape[0], -1)
        return self._decode(z, torch.zeros_like(z), torch.ones_like(z))
