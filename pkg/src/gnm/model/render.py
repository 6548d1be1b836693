"""Spatial-transformer rendering of per-cell glimpses onto the image canvas."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .nets import ShapeError


@dataclass
class RenderResult:
    x_tilde: torch.Tensor   # (B, 3, I, I)
    x_fg: torch.Tensor      # (B, 3, I, I)
    mask: torch.Tensor      # (B, 1, I, I), foreground coverage M
    gamma: torch.Tensor     # (B, N, 1, I, I), responsibilities
    glimpse: torch.Tensor   # (B, N, 3, G, G)
    glimpse_mask: torch.Tensor  # (B, N, 1, G, G)
    boxes: torch.Tensor     # (B, N, 4) center-x, center-y, width, height in pixels
    background: torch.Tensor  # (B, 3, I, I)


def cell_centers(grid: int, image_size: int, like: torch.Tensor) -> torch.Tensor:
    """(N, 2) pixel centers of the grid cells in row-major order."""
    pitch = image_size / grid
    idx = torch.arange(grid, dtype=like.dtype, device=like.device)
    cy, cx = torch.meshgrid((idx + 0.5) * pitch, (idx + 0.5) * pitch, indexing="ij")
    return torch.stack([cx.reshape(-1), cy.reshape(-1)], -1)


def where_to_box(where: torch.Tensor, grid: int, image_size: int, s_max: float) -> torch.Tensor:
    """Raw ``(shift_x, shift_y, scale_x, scale_y)`` per cell -> ``(cx, cy, w, h)`` in pixels.

    Centers stay within half a cell pitch of their cell center; box sides lie
    in ``(0, s_max)``.
    """
    pitch = image_size / grid
    centers = cell_centers(grid, image_size, where) + 0.5 * pitch * torch.tanh(where[..., :2])
    size = s_max * torch.sigmoid(where[..., 2:4])
    return torch.cat([centers, size], -1)


def box_to_xyxy(boxes: torch.Tensor, image_size: int | None = None) -> torch.Tensor:
    half = boxes[..., 2:] / 2
    out = torch.cat([boxes[..., :2] - half, boxes[..., :2] + half], -1)
    if image_size is not None:
        out = out.clamp(0, image_size)
    return out


def where_to_bbox(where: torch.Tensor, grid: int, image_size: int, s_max: float) -> torch.Tensor:
    return box_to_xyxy(where_to_box(where, grid, image_size, s_max), image_size)


def _theta_place(boxes: torch.Tensor, image_size: int) -> torch.Tensor:
    # output pixel u (normalised) reads glimpse coordinate (u - c) / s
    cx = 2 * boxes[..., 0] / image_size - 1
    cy = 2 * boxes[..., 1] / image_size - 1
    sx = boxes[..., 2] / image_size
    sy = boxes[..., 3] / image_size
    zero = torch.zeros_like(cx)
    row0 = torch.stack([1 / sx, zero, -cx / sx], -1)
    row1 = torch.stack([zero, 1 / sy, -cy / sy], -1)
    return torch.stack([row0, row1], -2)


def _theta_extract(boxes: torch.Tensor, image_size: int) -> torch.Tensor:
    cx = 2 * boxes[..., 0] / image_size - 1
    cy = 2 * boxes[..., 1] / image_size - 1
    sx = boxes[..., 2] / image_size
    sy = boxes[..., 3] / image_size
    zero = torch.zeros_like(cx)
    return torch.stack([torch.stack([sx, zero, cx], -1), torch.stack([zero, sy, cy], -1)], -2)


def place_glimpses(patches: torch.Tensor, boxes: torch.Tensor, image_size: int) -> torch.Tensor:
    """Inverse-warp (B, N, C, G, G) patches into (B, N, C, I, I) canvases (zeros outside the box)."""
    B, N, C = patches.shape[:3]
    theta = _theta_place(boxes.reshape(B * N, 4), image_size)
    grid = F.affine_grid(theta, (B * N, C, image_size, image_size), align_corners=False)
    out = F.grid_sample(patches.reshape(B * N, C, *patches.shape[-2:]), grid, mode="bilinear",
                        padding_mode="zeros", align_corners=False)
    return out.reshape(B, N, C, image_size, image_size)


def extract_glimpses(images: torch.Tensor, boxes: torch.Tensor, glimpse_size: int) -> torch.Tensor:
    """Crop (B, N) boxes out of (B, C, I, I) images into (B, N, C, G, G) patches."""
    B, C, I, _ = images.shape
    N = boxes.shape[1]
    theta = _theta_extract(boxes.reshape(B * N, 4), I)
    grid = F.affine_grid(theta, (B * N, C, glimpse_size, glimpse_size), align_corners=False)
    src = images[:, None].expand(B, N, C, I, I).reshape(B * N, C, I, I)
    out = F.grid_sample(src, grid, mode="bilinear", padding_mode="zeros", align_corners=False)
    return out.reshape(B, N, C, glimpse_size, glimpse_size)


def render(glimpse, glimpse_mask, pres, depth, boxes, background, eps: float = 1e-5) -> RenderResult:
    """Composite per-cell objects over the background.

    ``pres`` and ``depth`` are (B, N) (depth may carry a trailing singleton).
    Nearer objects (smaller depth) receive larger responsibility through
    ``sigmoid(-depth)``.
    """
    if glimpse.dim() != 5 or glimpse.shape[2] != 3 or glimpse_mask.shape[2] != 1:
        raise ShapeError("glimpse must be (B,N,3,G,G) and mask (B,N,1,G,G)")
    B, N = glimpse.shape[:2]
    I = background.shape[-1]
    if boxes.shape != (B, N, 4) or background.shape != (B, 3, I, I):
        raise ShapeError(f"boxes {tuple(boxes.shape)} / background {tuple(background.shape)} do not match")
    depth = depth.reshape(B, N)
    pres = pres.reshape(B, N)
    placed = place_glimpses(torch.cat([glimpse, glimpse_mask], 2), boxes, I)
    obj, m = placed[:, :, :3], placed[:, :, 3:]
    alpha = m * pres[:, :, None, None, None]
    w = alpha * torch.sigmoid(-depth)[:, :, None, None, None]
    gamma = w / (w.sum(1, keepdim=True) + eps)
    x_fg = (obj * gamma).sum(1)
    mask = alpha.sum(1).clamp(max=1.0)
    x_tilde = (x_fg + (1 - mask) * background).clamp(0.0, 1.0)
    return RenderResult(x_tilde=x_tilde, x_fg=x_fg.clamp(0.0, 1.0), mask=mask, gamma=gamma, glimpse=glimpse,
                        glimpse_mask=glimpse_mask, boxes=boxes, background=background)
