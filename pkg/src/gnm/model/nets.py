"""Network building blocks shared by GNM and the baselines."""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

SIGMA_FLOOR = 1e-4


class ShapeError(ValueError):
    pass


class NonFiniteLatent(FloatingPointError):
    pass


def layer_norm(channels: int) -> nn.Module:
    # one group == normalisation over (C, H, W) with a per-channel affine
    return nn.GroupNorm(1, channels)


def positive(raw: torch.Tensor) -> torch.Tensor:
    return F.softplus(raw) + SIGMA_FLOOR


def split_gaussian(raw: torch.Tensor, dim: int = -1) -> tuple[torch.Tensor, torch.Tensor]:
    mu, s = raw.chunk(2, dim=dim)
    return mu, positive(s)


def check_finite(*tensors, what: str = "latent"):
    for t in tensors:
        if t is not None and not torch.isfinite(t).all():
            raise NonFiniteLatent(f"non-finite {what} parameters")


class MLP(nn.Sequential):
    """Linear layers with CELU + LayerNorm after every layer but the last."""

    def __init__(self, d_in: int, hidden, d_out: int):
        layers = []
        for h in hidden:
            layers += [nn.Linear(d_in, h), nn.CELU(), nn.LayerNorm(h)]
            d_in = h
        layers.append(nn.Linear(d_in, d_out))
        super().__init__(*layers)


class ConvLSTMCell(nn.Module):
    def __init__(self, in_channels: int, hidden: int, kernel: int = 3):
        super().__init__()
        self.hidden = hidden
        self.gates = nn.Conv2d(in_channels + hidden, 4 * hidden, kernel, padding=kernel // 2)

    def init_state(self, like: torch.Tensor, spatial) -> tuple[torch.Tensor, torch.Tensor]:
        z = like.new_zeros(like.shape[0], self.hidden, *spatial)
        return z, z.clone()

    def forward(self, x, state):
        h, c = state
        i, f, o, g = self.gates(torch.cat([x, h], 1)).chunk(4, 1)
        c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        h = torch.sigmoid(o) * torch.tanh(c)
        return h, c


def _log2(n: int) -> int:
    k = int(round(math.log2(n)))
    if 2 ** k != n:
        raise ShapeError(f"{n} is not a power of two")
    return k


class ImageEncoder(nn.Module):
    """Alternating 4x4/stride-2 and 3x3/stride-1 convolutions down to a ``grid x grid`` map."""

    def __init__(self, image_size: int, grid: int, channels, out_channels: int, in_channels: int = 3):
        super().__init__()
        n_down = _log2(image_size // grid)
        widths = list(channels)[: n_down - 1]
        if len(widths) < n_down - 1:
            widths += [widths[-1] if widths else out_channels] * (n_down - 1 - len(widths))
        layers = []
        c = in_channels
        for w in widths:
            layers += [nn.Conv2d(c, w, 4, 2, 1), layer_norm(w), nn.CELU(),
                       nn.Conv2d(w, w, 3, 1, 1), layer_norm(w), nn.CELU()]
            c = w
        layers.append(nn.Conv2d(c, out_channels, 4, 2, 1))
        self.net = nn.Sequential(*layers)
        self.image_size = image_size
        self.in_channels = in_channels

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.in_channels or x.shape[-1] != self.image_size \
                or x.shape[-2] != self.image_size:
            raise ShapeError(f"expected (B,{self.in_channels},{self.image_size},{self.image_size}), "
                             f"got {tuple(x.shape)}")
        return self.net(x)


class SubpixelConv(nn.Sequential):
    """Convolution to ``out * r^2`` channels followed by a pixel shuffle."""

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int):
        super().__init__(nn.Conv2d(c_in, c_out * stride * stride, kernel, padding=kernel // 2),
                         nn.PixelShuffle(stride))


def subpixel_stack(c_in: int, spec, act=nn.CELU) -> nn.Sequential:
    """``spec`` is a list of ``(channels, kernel, stride)``; the last layer has no norm/activation."""
    layers = []
    for k, (c, kernel, stride) in enumerate(spec):
        layers.append(SubpixelConv(c_in, c, kernel, stride))
        if k < len(spec) - 1:
            layers += [layer_norm(c), act()]
        c_in = c
    return nn.Sequential(*layers)


class GlimpseDecoder(nn.Module):
    """z_what (d) -> object RGB (3, G, G) and mask (1, G, G), all in (0, 1)."""

    def __init__(self, d_what: int, glimpse_size: int, channels):
        super().__init__()
        n_up = _log2(glimpse_size)
        widths = list(channels)[: n_up - 1]
        widths += [widths[-1] if widths else 4] * (n_up - 1 - len(widths))
        self.net = subpixel_stack(d_what, [(w, 3, 2) for w in widths] + [(4, 3, 2)])
        self.d_what = d_what

    def forward(self, z_what):
        if z_what.shape[-1] != self.d_what:
            raise ShapeError(f"z_what must have {self.d_what} dims, got {z_what.shape[-1]}")
        lead = z_what.shape[:-1]
        out = torch.sigmoid(self.net(z_what.reshape(-1, self.d_what, 1, 1)))
        out = out.reshape(*lead, *out.shape[1:])
        return out[..., :3, :, :], out[..., 3:, :, :]


def background_strides(image_size: int, table=(4, 2, 4, 2, 2)) -> list[int]:
    remaining, out = image_size, []
    for s in table:
        if remaining % s == 0 and remaining >= s:
            out.append(s)
            remaining //= s
        else:
            out.append(1)
    if remaining != 1:
        raise ShapeError(f"cannot upsample 1x1 to {image_size} with strides {table}")
    return out


class BackgroundDecoder(nn.Module):
    """z_b -> background RGB (3, I, I); the fourth output channel is dropped."""

    def __init__(self, d_bg: int, image_size: int, channels):
        super().__init__()
        strides = background_strides(image_size)
        spec = [(c, 1, s) for c, s in zip(channels, strides)] + [(4, 3, 1)]
        self.net = subpixel_stack(d_bg, spec)
        self.d_bg = d_bg

    def forward(self, z_b):
        if z_b.dim() != 2 or z_b.shape[-1] != self.d_bg:
            raise ShapeError(f"z_b must be (B, {self.d_bg}), got {tuple(z_b.shape)}")
        return torch.sigmoid(self.net(z_b[:, :, None, None]))[:, :3]


def init_weights(module: nn.Module):
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_uniform_(m.weight, a=math.sqrt(5))
            if m.bias is not None:
                nn.init.zeros_(m.bias)
