"""Reference models and ablations.

``build_variant`` returns one of

* ``GNM_STRUCT``   - the default model,
* ``GNM_GAUSSIAN`` - a single N(0, I) global latent instead of the drawing prior,
* ``GNM_NOMLP``    - per-position heads instead of the interaction MLP,
* ``CONVDRAW``     - pixel-space DRAW over the shared image encoding with a
  two-layer convolutional interaction,
* ``CONVDRAW_MLP`` - the same with an MLP interaction,
* ``VAE``          - a single 128-d Gaussian latent.

Every model exposes ``generate`` and ``importance_log_weights`` so the
evaluation code can treat them alike; the non-GNM models also provide
``loss(x, noise)`` returning a :class:`~gnm.objective.LossReport`.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from .config import MODEL_KINDS, ModelConfig
from .model.dists import Noise, gaussian_log_prob, gaussian_sample
from .model.gnm import GNM
from .model.nets import (MLP, ConvLSTMCell, ImageEncoder, ShapeError, _log2, check_finite, init_weights,
                         layer_norm, positive, subpixel_stack)
from .objective import LossReport, kl_gaussian, recon_log_likelihood

DEFAULT_INTERACTION = {"GNM_STRUCT": "mlp", "GNM_NOMLP": "none", "GNM_GAUSSIAN": None,
                       "CONVDRAW": "conv", "CONVDRAW_MLP": "mlp", "VAE": None}
BETA_SWEEP = (1, 2, 3, 5, 10)


class InvalidConfig(ValueError):
    pass


@dataclass
class VariantConfig:
    kind: str = "GNM_STRUCT"
    draw_steps: int = 4
    beta: float = 1.0
    interaction: Optional[str] = None

    def resolved_interaction(self) -> Optional[str]:
        default = DEFAULT_INTERACTION[self.kind]
        if self.interaction is None or default is None:
            return default
        if self.interaction != default:
            raise InvalidConfig(f"{self.kind} uses interaction {default!r}, not {self.interaction!r}")
        return default


def _pixel_decoder(c_in: int, head, image_size: int, start_size: int) -> nn.Sequential:
    """Sub-pixel decoder: ``head`` layers, then (1x1 stride 2, 3x3) pairs up to ``image_size``, ReLU."""
    scale = 1
    for _, _, s in head:
        scale *= s
    n_up = _log2(image_size // (start_size * scale))
    widths = list((64, 32, 16, 16))[: max(n_up - 1, 0)] + [8]
    spec = list(head)
    for w in widths[:-1]:
        spec += [(w, 1, 2), (w, 3, 1)]
    if n_up >= 1:
        spec.append((widths[-1], 1, 2))
    spec.append((3, 3, 1))
    return subpixel_stack(c_in, spec, act=nn.ReLU)


class ConvDRAW(nn.Module):
    """DRAW on a spatial latent canvas; the final canvas is decoded to pixels."""

    def __init__(self, cfg: ModelConfig, interaction: str = "conv"):
        super().__init__()
        C, G, k = cfg.feat_dim, cfg.grid, cfg.convdraw_latent_channels
        self.cfg, self.k, self.interaction = cfg, k, interaction
        self.encoder = ImageEncoder(cfg.image_size, G, cfg.encoder_channels, C)
        self.enc_lstm = ConvLSTMCell(3 * C, C)
        self.dec_lstm = ConvLSTMCell(k, C)
        self.post_head = self._head()
        self.prior_head = self._head()
        self.out_cnn = nn.Conv2d(C, C, 3, padding=1)
        self.decoder = _pixel_decoder(C, [(128, 3, 1)], cfg.image_size, G)
        init_weights(self)

    def _head(self) -> nn.Module:
        cfg, C, G = self.cfg, self.cfg.feat_dim, self.cfg.grid
        if self.interaction == "conv":
            layers, c = [], C
            for h in cfg.convdraw_interaction:
                layers += [nn.Conv2d(c, h, 3, padding=1), layer_norm(h), nn.CELU()]
                c = h
            layers.append(nn.Conv2d(c, 2 * self.k, 3, padding=1))
            return nn.Sequential(*layers)
        return MLP(C * G * G, cfg.interaction_hidden, 2 * self.k * G * G)

    def _params(self, head, h):
        B, G = h.shape[0], self.cfg.grid
        out = head(h if self.interaction == "conv" else h.reshape(B, -1))
        out = out.reshape(B, 2 * self.k, G, G)
        return out[:, : self.k], positive(out[:, self.k:])

    def draw(self, x=None, batch: int | None = None, noise: Noise | None = None):
        cfg = self.cfg
        noise = noise or Noise(None)
        fx = self.encoder(x) if x is not None else None
        B = x.shape[0] if x is not None else batch
        ref = next(self.parameters()).new_zeros(B, cfg.feat_dim, cfg.grid, cfg.grid)
        h_dec, c_dec = self.dec_lstm.init_state(ref, ref.shape[-2:])
        enc = self.enc_lstm.init_state(ref, ref.shape[-2:])
        f = ref
        steps = []
        for _ in range(cfg.draw_steps):
            pm, ps = self._params(self.prior_head, h_dec)
            if fx is not None:
                enc = self.enc_lstm(torch.cat([h_dec, fx, fx - f], 1), enc)
                qm, qs = self._params(self.post_head, enc[0])
                check_finite(qm, qs)
                z = gaussian_sample(qm, qs, noise)
            else:
                qm = qs = None
                z = gaussian_sample(pm, ps, noise)
            h_dec, c_dec = self.dec_lstm(z, (h_dec, c_dec))
            f = f + self.out_cnn(h_dec)
            steps.append((z, pm, ps, qm, qs))
        return torch.sigmoid(self.decoder(f)), steps

    def loss(self, x, noise: Noise) -> LossReport:
        x_tilde, steps = self.draw(x, noise=noise)
        recon = recon_log_likelihood(x, x_tilde, self.cfg.sigma_x)
        kl = sum(kl_gaussian(qm, qs, pm, ps, dim=None).reshape(x.shape[0], -1).sum(1)
                 for _, pm, ps, qm, qs in steps)
        zero = recon.new_zeros(())
        return LossReport(recon=recon.mean(), kl_g=kl.mean(), kl_b=zero, kl_s=zero, aux_b=zero, aux_o_pres=zero,
                          aux_o_wherewhat=zero, beta=self.cfg.beta)

    def reconstruct(self, x, noise: Noise | None = None):
        return self.draw(x, noise=noise)[0]

    @torch.no_grad()
    def generate(self, batch: int, seed: int | None = 0, zs_mode: str = "mode") -> torch.Tensor:
        return self.draw(batch=batch, noise=Noise(seed))[0]

    def log_weights(self, x, noise: Noise):
        x_tilde, steps = self.draw(x, noise=noise)
        B = x.shape[0]
        lw = recon_log_likelihood(x, x_tilde, self.cfg.sigma_x)
        for z, pm, ps, qm, qs in steps:
            lw = lw + (gaussian_log_prob(z, pm, ps) - gaussian_log_prob(z, qm, qs)).reshape(B, -1).sum(1)
        return lw

    @torch.no_grad()
    def importance_log_weights(self, x, K: int, seed: int = 0):
        noise = Noise(seed)
        return torch.stack([self.log_weights(x, noise) for _ in range(K)])


class VAE(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        C, G, d = cfg.feat_dim, cfg.grid, cfg.vae_latent
        self.cfg, self.d = cfg, d
        self.encoder = ImageEncoder(cfg.image_size, G, cfg.encoder_channels, C)
        layers, c = [], C
        for h in cfg.vae_head:
            layers += [nn.Conv2d(c, h, 3, padding=1), layer_norm(h), nn.CELU()]
            c = h
        # a kernel as large as the grid collapses the map to 1x1
        layers.append(nn.Conv2d(c, 2 * d, G))
        self.head = nn.Sequential(*layers)
        self.decoder = _pixel_decoder(d, [(128, 1, 4), (128, 3, 1)], cfg.image_size, 1)
        init_weights(self)

    def posterior(self, x):
        out = self.head(self.encoder(x))
        if out.shape[-2:] != (1, 1):
            raise ShapeError(f"latent head produced spatial size {tuple(out.shape[-2:])}")
        mu, s = out.flatten(1).chunk(2, 1)
        return mu, positive(s)

    def decode(self, z):
        return torch.sigmoid(self.decoder(z[:, :, None, None]))

    def loss(self, x, noise: Noise) -> LossReport:
        mu, sigma = self.posterior(x)
        z = gaussian_sample(mu, sigma, noise)
        recon = recon_log_likelihood(x, self.decode(z), self.cfg.sigma_x)
        kl = kl_gaussian(mu, sigma, torch.zeros_like(mu), torch.ones_like(sigma))
        zero = recon.new_zeros(())
        return LossReport(recon=recon.mean(), kl_g=kl.mean(), kl_b=zero, kl_s=zero, aux_b=zero, aux_o_pres=zero,
                          aux_o_wherewhat=zero, beta=self.cfg.beta)

    def reconstruct(self, x, noise: Noise | None = None):
        mu, sigma = self.posterior(x)
        return self.decode(gaussian_sample(mu, sigma, noise or Noise(None)))

    @torch.no_grad()
    def generate(self, batch: int, seed: int | None = 0, zs_mode: str = "mode") -> torch.Tensor:
        ref = next(self.parameters())
        z = gaussian_sample(ref.new_zeros(batch, self.d), ref.new_ones(batch, self.d), Noise(seed))
        return self.decode(z)

    def log_weights(self, x, noise: Noise):
        mu, sigma = self.posterior(x)
        z = gaussian_sample(mu, sigma, noise)
        prior = gaussian_log_prob(z, torch.zeros_like(z), torch.ones_like(z)).sum(1)
        return (recon_log_likelihood(x, self.decode(z), self.cfg.sigma_x) + prior
                - gaussian_log_prob(z, mu, sigma).sum(1))

    @torch.no_grad()
    def importance_log_weights(self, x, K: int, seed: int = 0):
        noise = Noise(seed)
        return torch.stack([self.log_weights(x, noise) for _ in range(K)])


def build_variant(variant: VariantConfig, model_cfg: ModelConfig | None = None) -> nn.Module:
    if variant.kind not in MODEL_KINDS:
        raise InvalidConfig(f"unknown model kind {variant.kind!r}")
    if variant.draw_steps < 1 or variant.beta <= 0:
        raise InvalidConfig("draw_steps must be >= 1 and beta > 0")
    interaction = variant.resolved_interaction()
    cfg = dataclasses.replace(model_cfg or ModelConfig(), kind=variant.kind, draw_steps=variant.draw_steps,
                              beta=variant.beta, interaction=interaction or "mlp")
    try:
        cfg.validate()
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from exc
    if variant.kind == "GNM_STRUCT":
        return GNM(cfg, "struct", "mlp")
    if variant.kind == "GNM_NOMLP":
        return GNM(cfg, "struct", "none")
    if variant.kind == "GNM_GAUSSIAN":
        return GNM(cfg, "gaussian")
    if variant.kind in ("CONVDRAW", "CONVDRAW_MLP"):
        return ConvDRAW(cfg, interaction)
    return VAE(cfg)


def build_model(cfg: ModelConfig) -> nn.Module:
    """Model for a config's ``kind``/``draw_steps``/``beta``/``interaction`` fields."""
    interaction = cfg.interaction if DEFAULT_INTERACTION[cfg.kind] == cfg.interaction else None
    return build_variant(VariantConfig(cfg.kind, cfg.draw_steps, cfg.beta, interaction), cfg)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def _forward(model, kind, x=None, seed: int | None = None, batch: int | None = None):
    if not isinstance(model, kind):
        raise InvalidConfig(f"expected a {kind.__name__} model, got {type(model).__name__}")
    if x is None:
        return model.generate(batch or 1, seed), None
    size = model.cfg.image_size
    if x.dim() != 4 or x.shape[1:] != (3, size, size):
        raise ShapeError(f"expected (B,3,{size},{size}), got {tuple(x.shape)}")
    report = model.loss(x, Noise(seed))
    return model.reconstruct(x, Noise(seed)), report


def convdraw_forward(model: ConvDRAW, x=None, seed: int | None = None, batch: int | None = None):
    """Reconstruction and loss terms for ``x``, or ``batch`` prior samples when ``x`` is None."""
    return _forward(model, ConvDRAW, x, seed, batch)


def vae_forward(model: VAE, x=None, seed: int | None = None, batch: int | None = None):
    return _forward(model, VAE, x, seed, batch)


def pointwise_as_linear(conv: nn.Conv2d, grid: int) -> nn.Linear:
    """Dense layer over the flattened (C, H, W) state computing the same map as a 1x1 conv.

    Output unit ``c*H*W + p`` reads only position ``p``, so the dense layer's
    ``(mu, sigma)`` halves line up with a per-position head's reshaped output.
    """
    c_out, c_in = conv.weight.shape[:2]
    n = grid * grid
    lin = nn.Linear(c_in * n, c_out * n).to(conv.weight)
    with torch.no_grad():
        w = torch.zeros(c_out, n, c_in, n, dtype=conv.weight.dtype)
        eye = torch.eye(n, dtype=conv.weight.dtype)
        w += conv.weight[:, None, :, 0, 0, None] * eye[None, :, None, :]
        lin.weight.copy_(w.reshape(c_out * n, c_in * n))
        lin.bias.copy_(conv.bias.repeat_interleave(n))
    return lin
