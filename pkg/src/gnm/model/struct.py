"""Per-cell structured latents and the background latent."""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from ..config import ModelConfig
from .dists import Noise, bernoulli_sample, gaussian_sample, relaxed_bernoulli_sample
from .nets import MLP, ShapeError, layer_norm, positive, split_gaussian


@dataclass
class StructParams:
    pres_logit: torch.Tensor   # (B, N)
    where_mu: torch.Tensor     # (B, N, 4)
    where_sigma: torch.Tensor
    depth_mu: torch.Tensor     # (B, N, d_depth)
    depth_sigma: torch.Tensor
    what_mu: torch.Tensor      # (B, N, d_what)
    what_sigma: torch.Tensor

    @property
    def pres_prob(self) -> torch.Tensor:
        return torch.sigmoid(self.pres_logit)

    def gaussians(self):
        return {"where": (self.where_mu, self.where_sigma), "depth": (self.depth_mu, self.depth_sigma),
                "what": (self.what_mu, self.what_sigma)}


@dataclass
class StructSample:
    pres: torch.Tensor   # (B, N), relaxed or hard
    where: torch.Tensor
    depth: torch.Tensor
    what: torch.Tensor


class StructureNet(nn.Module):
    """Conv stack from a (B, C, H, W) feature map to per-cell latent parameters.

    The same instance serves the posterior (fed the image encoding) and the
    conditional prior (fed the drawn map).
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        layers, c = [], cfg.feat_dim
        for k, h in enumerate(cfg.struct_hidden):
            layers += [nn.Conv2d(c, h, 3 if k == 0 else 1, padding=1 if k == 0 else 0), layer_norm(h), nn.CELU()]
            c = h
        layers.append(nn.Conv2d(c, cfg.struct_channels, 1))
        self.net = nn.Sequential(*layers)
        self.cfg = cfg

    def forward(self, f: torch.Tensor) -> StructParams:
        cfg = self.cfg
        if f.dim() != 4 or f.shape[1:] != (cfg.feat_dim, cfg.grid, cfg.grid):
            raise ShapeError(f"expected (B,{cfg.feat_dim},{cfg.grid},{cfg.grid}), got {tuple(f.shape)}")
        out = self.net(f)
        B = out.shape[0]
        out = out.permute(0, 2, 3, 1).reshape(B, cfg.n_cells, cfg.struct_channels)
        sizes = [1, 4, 4, cfg.d_depth, cfg.d_depth, cfg.d_what, cfg.d_what]
        logit, wm, ws, dm, ds, am, as_ = out.split(sizes, -1)
        return StructParams(logit[..., 0], wm, positive(ws), dm, positive(ds), am, positive(as_))


def sample_struct(params: StructParams, noise: Noise, temperature: float | None = None,
                  mode: str = "relaxed") -> StructSample:
    """Draw cell latents.

    ``mode``: ``"relaxed"`` (binary-concrete presence, training), ``"hard"``
    (Bernoulli presence) or ``"mode"`` (distribution modes, no noise).
    """
    if mode == "mode":
        noise = Noise(None)
    if mode == "relaxed":
        pres = relaxed_bernoulli_sample(params.pres_logit, temperature, noise)
    else:
        pres = bernoulli_sample(params.pres_logit, noise)
    return StructSample(
        pres=pres,
        where=gaussian_sample(params.where_mu, params.where_sigma, noise),
        depth=gaussian_sample(params.depth_mu, params.depth_sigma, noise),
        what=gaussian_sample(params.what_mu, params.what_sigma, noise),
    )


class BackgroundNets(nn.Module):
    def __init__(self, cfg: ModelConfig, global_dim: int):
        super().__init__()
        self.posterior_net = MLP(cfg.feat_dim * cfg.n_cells, cfg.bg_post_hidden, 2 * cfg.d_bg)
        self.prior_net = MLP(global_dim, cfg.bg_prior_hidden, 2 * cfg.d_bg)
        self.in_dim = cfg.feat_dim * cfg.n_cells
        self.global_dim = global_dim

    def posterior(self, fx: torch.Tensor):
        flat = fx.reshape(fx.shape[0], -1)
        if flat.shape[1] != self.in_dim:
            raise ShapeError(f"background posterior expects {self.in_dim} inputs, got {flat.shape[1]}")
        return split_gaussian(self.posterior_net(flat))

    def prior(self, z_global: torch.Tensor):
        if z_global.shape[-1] != self.global_dim:
            raise ShapeError(f"background prior expects {self.global_dim} inputs, got {z_global.shape[-1]}")
        return split_gaussian(self.prior_net(z_global))
