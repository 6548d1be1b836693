"""Sample grids: prior samples, latent traversals, decompositions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

from .model.dists import Noise, gaussian_sample
from .model.gnm import GNM
from .model.render import where_to_bbox
from .model.struct import StructParams, StructSample, sample_struct
from .viz import draw_boxes, montage, to_uint8

MODES = ("struct", "global-traverse", "object-traverse", "resample-zs")


class NeedsGNM(TypeError):
    pass


def _need_gnm(model):
    if not isinstance(model, GNM):
        raise NeedsGNM(f"this mode needs a GNM model, got {type(model).__name__}")


@torch.no_grad()
def prior_samples(model, n: int, seed: int = 0) -> torch.Tensor:
    model.eval()
    return model.generate(n, seed=seed)


@torch.no_grad()
def global_traverse(model: GNM, n: int, seed: int = 0, step: int = 0, dim: int = 0, span: float = 3.0):
    """Sweep one coordinate of one global step latent over ``[-span, span]`` from a prior sample."""
    _need_gnm(model)
    model.eval()
    base = model.sample_global_prior(1, Noise(seed)).z
    z = base.repeat(n, 1, 1)
    z[:, step, dim] = torch.linspace(-span, span, n, dtype=z.dtype)
    return model.generate_from_global(model.global_from_z(z), Noise(None), "mode")[0].x_tilde


@torch.no_grad()
def posterior_latents(model: GNM, x: torch.Tensor):
    """Modes of every posterior latent for a single-image batch."""
    _, tr = model.reconstruct(x, Noise(None), pres_mode="mode")
    return tr


def _repeat_sample(z: StructSample, n: int) -> StructSample:
    return StructSample(*(t.repeat(n, *([1] * (t.dim() - 1))) for t in (z.pres, z.where, z.depth, z.what)))


@torch.no_grad()
def object_traverse(model: GNM, x: torch.Tensor, n: int, cell: int | None = None, sweep: float = 1.0):
    """Move one cell's box centre over a sqrt(n) x sqrt(n) grid of ``where`` shifts in ``[-sweep, sweep]``.

    The cell defaults to the most confident one; everything else stays at its
    posterior mode, so ``sweep=0`` reproduces the plain reconstruction.
    """
    _need_gnm(model)
    model.eval()
    tr = posterior_latents(model, x[:1])
    if cell is None:
        cell = int(tr.q.pres_prob[0].argmax())
    side = max(int(round(n ** 0.5)), 1)
    offsets = torch.linspace(-sweep, sweep, side) if side > 1 else torch.zeros(1)
    gy, gx = torch.meshgrid(offsets, offsets, indexing="ij")
    deltas = torch.stack([gx.flatten(), gy.flatten()], 1)[:n]
    z = _repeat_sample(tr.z, len(deltas))
    z.where = z.where.clone()
    z.where[:, cell, :2] += deltas.to(z.where)
    return model.render_latents(z, tr.z_bg.repeat(len(deltas), 1)).x_tilde


def _scaled(p: StructParams, scale: float) -> StructParams:
    return StructParams(p.pres_logit, p.where_mu, p.where_sigma * scale, p.depth_mu, p.depth_sigma * scale,
                        p.what_mu, p.what_sigma * scale)


@torch.no_grad()
def resample_zs(model: GNM, n: int, seed: int = 0, source: str = "prior", x: torch.Tensor | None = None,
                std_scale: float = 1.0):
    """Hold one global latent fixed and redraw the structure map ``n`` times.

    ``std_scale`` multiplies every structure-map standard deviation; at 0 the
    presence is also taken at its mode, so all tiles coincide.
    """
    _need_gnm(model)
    model.eval()
    if source == "posterior":
        if x is None:
            raise ValueError("posterior source needs an image")
        z_g = model.infer_global(model.encode_image(x[:1]), Noise(None)).z
    elif source == "prior":
        z_g = model.sample_global_prior(1, Noise(seed)).z
    else:
        raise ValueError(f"unknown source {source!r}")
    glob = model.global_from_z(z_g.repeat(n, 1, 1))
    p = _scaled(model.struct_params(glob.f), std_scale)
    bg_mu, _ = model.background_prior(glob.z_flat)
    noise = Noise(seed + 1)
    z = sample_struct(p, noise, mode="hard" if std_scale > 0 else "mode")
    return model.render_latents(z, bg_mu).x_tilde


@dataclass
class Decomposition:
    panel: Image.Image
    boxes: np.ndarray          # (K, 4) xyxy of cells with pres >= threshold
    n_objects: int


@torch.no_grad()
def decompose(model: GNM, x: torch.Tensor, threshold: float = 0.5) -> Decomposition:
    """One row per call: input, reconstruction, background, foreground, mask, boxes, then glimpses."""
    _need_gnm(model)
    model.eval()
    cfg = model.cfg
    out, tr = model.reconstruct(x[:1], Noise(None), pres_mode="mode")
    keep = (tr.q.pres_prob[0] >= threshold).nonzero()[:, 0]
    boxes = where_to_bbox(tr.z.where, cfg.grid, cfg.image_size, cfg.s_max)[0, keep].numpy()
    S = cfg.image_size
    glimpses = out.glimpse[0, keep] * out.glimpse_mask[0, keep]
    glimpses = (torch.nn.functional.interpolate(glimpses, size=(S, S), mode="nearest") if len(keep)
                else glimpses.new_zeros(0, 3, S, S))
    with_boxes = draw_boxes(Image.fromarray(to_uint8(out.x_tilde)[0]), boxes)
    boxed = torch.as_tensor(np.array(with_boxes)).permute(2, 0, 1)[None].float() / 255
    tiles = torch.cat([x[:1].cpu(), out.x_tilde, out.background, out.x_fg.clamp(0, 1),
                       out.mask.expand(-1, 3, -1, -1), boxed, glimpses])
    return Decomposition(montage(tiles, ncol=len(tiles)), boxes, len(keep))
