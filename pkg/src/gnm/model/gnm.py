"""The full model: global latent -> structured latent map -> rendered image."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import torch
from torch import nn

from ..config import ModelConfig
from .dists import Noise, bernoulli_log_prob, gaussian_log_prob, gaussian_sample
from .nets import BackgroundDecoder, GlimpseDecoder, ImageEncoder, check_finite, init_weights
from .render import RenderResult, render, where_to_box
from .struct import BackgroundNets, StructParams, StructSample, StructureNet, sample_struct
from .structdraw import GaussianGlobal, GlobalLatent, StructDRAW


@dataclass
class Trace:
    """Every distribution and sample produced by one inference pass."""

    glob: GlobalLatent
    q: StructParams           # q(z^s | f^x)
    p: StructParams           # p(z^s | f), same network
    bg_q: tuple[torch.Tensor, torch.Tensor]
    bg_p: tuple[torch.Tensor, torch.Tensor]
    z: StructSample
    z_bg: torch.Tensor
    render: RenderResult

    @property
    def n_factors(self) -> int:
        return self.q.pres_logit.shape[1] + 1 + self.glob.steps


class GNM(nn.Module):
    def __init__(self, cfg: ModelConfig, global_prior: str = "struct", interaction: str | None = None):
        super().__init__()
        self.cfg = cfg
        interaction = interaction or ("none" if cfg.kind == "GNM_NOMLP" else "mlp")
        self.encoder = ImageEncoder(cfg.image_size, cfg.grid, cfg.encoder_channels, cfg.feat_dim)
        if global_prior == "struct":
            self.global_model = StructDRAW(cfg, interaction)
        elif global_prior == "gaussian":
            self.global_model = GaussianGlobal(cfg)
        else:
            raise ValueError(f"unknown global prior {global_prior!r}")
        self.structure = StructureNet(cfg)
        self.background = BackgroundNets(cfg, cfg.d_g * cfg.draw_steps)
        self.glimpse_decoder = GlimpseDecoder(cfg.d_what, cfg.glimpse_size, cfg.glimpse_channels)
        self.background_decoder = BackgroundDecoder(cfg.d_bg, cfg.image_size, cfg.bg_channels)
        init_weights(self)

    # -- components -------------------------------------------------------
    def encode_image(self, x):
        return self.encoder(x)

    def infer_global(self, fx, noise: Noise) -> GlobalLatent:
        return self.global_model.infer(fx, noise)

    def sample_global_prior(self, batch: int, noise: Noise) -> GlobalLatent:
        return self.global_model.sample_prior(batch, noise)

    def global_from_z(self, z) -> GlobalLatent:
        return self.global_model.rollout(z)

    def struct_params(self, f) -> StructParams:
        return self.structure(f)

    def background_posterior(self, fx):
        return self.background.posterior(fx)

    def background_prior(self, z_global):
        return self.background.prior(z_global)

    def decode_glimpse(self, z_what):
        return self.glimpse_decoder(z_what)

    def decode_background(self, z_bg):
        return self.background_decoder(z_bg)

    def boxes(self, where):
        c = self.cfg
        return where_to_box(where, c.grid, c.image_size, c.s_max)

    def render_latents(self, z: StructSample, z_bg, mask_fn: Optional[Callable] = None) -> RenderResult:
        o, m = self.decode_glimpse(z.what)
        if mask_fn is not None:
            m = mask_fn(m)
        return render(o, m, z.pres, z.depth[..., 0], self.boxes(z.where), self.decode_background(z_bg),
                      self.cfg.eps)

    # -- inference / generation -------------------------------------------
    def reconstruct(self, x, noise: Noise, temperature: float = 0.5, pres_mode: str = "relaxed",
                    mask_fn: Optional[Callable] = None) -> tuple[RenderResult, Trace]:
        fx = self.encode_image(x)
        glob = self.infer_global(fx, noise)
        q = self.struct_params(fx)
        p = self.struct_params(glob.f)
        bg_q = self.background_posterior(fx)
        bg_p = self.background_prior(glob.z_flat)
        check_finite(q.pres_logit, q.where_mu, q.where_sigma, q.what_mu, q.what_sigma, *bg_q, what="posterior")
        z = sample_struct(q, noise, temperature, pres_mode)
        z_bg = gaussian_sample(*bg_q, noise)
        out = self.render_latents(z, z_bg, mask_fn)
        return out, Trace(glob, q, p, bg_q, bg_p, z, z_bg, out)

    def generate_from_global(self, glob: GlobalLatent, noise: Noise, zs_mode: str = "mode"):
        p = self.struct_params(glob.f)
        bg_mu, bg_sigma = self.background_prior(glob.z_flat)
        if zs_mode == "mode":
            z = sample_struct(p, Noise(None), mode="mode")
            z_bg = bg_mu
        else:
            z = sample_struct(p, noise, mode="hard")
            z_bg = gaussian_sample(bg_mu, bg_sigma, noise)
        return self.render_latents(z, z_bg), z, p

    @torch.no_grad()
    def generate(self, batch: int, seed: int | None = 0, zs_mode: str = "mode") -> torch.Tensor:
        noise = Noise(seed)
        glob = self.sample_global_prior(batch, noise)
        return self.generate_from_global(glob, noise, zs_mode)[0].x_tilde

    # -- densities ----------------------------------------------------------
    def log_weights(self, x, noise: Noise) -> torch.Tensor:
        """One importance weight per image: log p(x, z) - log q(z | x) with hard presence."""
        out, tr = self.reconstruct(x, noise, pres_mode="hard")
        B = x.shape[0]
        sx = torch.full_like(x, self.cfg.sigma_x)
        lw = gaussian_log_prob(x, out.x_tilde, sx).reshape(B, -1).sum(1)
        g = tr.glob
        lw = lw + (gaussian_log_prob(g.z, g.prior_mu, g.prior_sigma)
                   - gaussian_log_prob(g.z, g.post_mu, g.post_sigma)).reshape(B, -1).sum(1)
        lw = lw + (gaussian_log_prob(tr.z_bg, *tr.bg_p) - gaussian_log_prob(tr.z_bg, *tr.bg_q)).sum(1)
        lw = lw + (bernoulli_log_prob(tr.z.pres, tr.p.pres_logit)
                   - bernoulli_log_prob(tr.z.pres, tr.q.pres_logit)).sum(1)
        for name, (mu_q, s_q) in tr.q.gaussians().items():
            mu_p, s_p = tr.p.gaussians()[name]
            val = getattr(tr.z, name)
            lw = lw + (gaussian_log_prob(val, mu_p, s_p) - gaussian_log_prob(val, mu_q, s_q)).reshape(B, -1).sum(1)
        return lw

    @torch.no_grad()
    def importance_log_weights(self, x, K: int, seed: int = 0) -> torch.Tensor:
        noise = Noise(seed)
        return torch.stack([self.log_weights(x, noise) for _ in range(K)])
