"""Bilinear resampling with the half-pixel (align-corners-off) convention.

The sampling rule is pinned here once and reused by every resize in the
package (image/depth downsampling, the Down operator inside losses, and the
affinity-cap resize). Output pixel (i, j) reads the source at

    sy = (i + 0.5) * H / out_h - 0.5
    sx = (j + 0.5) * W / out_w - 0.5

and blends the four neighbouring source pixels (indices clamped to the grid)
with the usual bilinear weights. Golden tests freeze these numerics.
"""

from __future__ import annotations

import math

import numpy as np
import torch


def round_dim(x: float) -> int:
    """Half-up rounding used for every derived grid dimension."""
    return int(math.floor(x + 0.5))


def scaled_size(h: int, w: int, mu: float) -> tuple[int, int]:
    """Target dimensions round(mu*h) x round(mu*w)."""
    return round_dim(mu * h), round_dim(mu * w)


def bilinear_resize(grid: torch.Tensor, out_h: int, out_w: int) -> torch.Tensor:
    """Resize the trailing two dims of ``grid`` (..., H, W). Differentiable.

    Coordinate math runs in float64; values keep the input dtype. For
    out_h <= H and out_w <= W every output is a convex combination of inputs.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output dims must be positive, got {out_h}x{out_w}")
    h, w = grid.shape[-2], grid.shape[-1]

    sy = (torch.arange(out_h, dtype=torch.float64) + 0.5) * (h / out_h) - 0.5
    sx = (torch.arange(out_w, dtype=torch.float64) + 0.5) * (w / out_w) - 0.5
    y0 = torch.floor(sy)
    x0 = torch.floor(sx)
    ty = (sy - y0).to(grid.dtype).view(-1, 1)
    tx = (sx - x0).to(grid.dtype).view(1, -1)
    y0 = y0.long()
    x0 = x0.long()
    y0c = y0.clamp(0, h - 1)
    y1c = (y0 + 1).clamp(0, h - 1)
    x0c = x0.clamp(0, w - 1)
    x1c = (x0 + 1).clamp(0, w - 1)

    rows0 = grid.index_select(-2, y0c)
    rows1 = grid.index_select(-2, y1c)
    top = rows0.index_select(-1, x0c) * (1 - tx) + rows0.index_select(-1, x1c) * tx
    bot = rows1.index_select(-1, x0c) * (1 - tx) + rows1.index_select(-1, x1c) * tx
    return top * (1 - ty) + bot * ty


def bilinear_resize_np(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Numpy convenience wrapper around :func:`bilinear_resize`."""
    arr = np.ascontiguousarray(grid)
    return bilinear_resize(torch.from_numpy(arr), out_h, out_w).numpy()
