"""Image-like modalities: depth (as disparity) and tactile RGB frames."""
from __future__ import annotations

import numpy as np

from omnilens.errors import ConfigurationError, DegenerateInputError
from omnilens.numerics import tensor as T
from omnilens.numerics.module import Linear, Module, Parameter, trunc_normal
from omnilens.tokenizers.common import add_positional


def depth_to_disparity(depth, scale_const=1.0, d_min=1e-3, standardize=True):
    """Reciprocal depth, clamped at ``d_min``; zero depth maps to the maximum ``scale_const / d_min``."""
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth < 0):
        raise DegenerateInputError("depth must be non-negative")
    disparity = scale_const / np.maximum(depth, d_min)
    if not standardize:
        return disparity
    std = disparity.std()
    if std == 0:
        return np.zeros_like(disparity)
    return (disparity - disparity.mean()) / std


def grid_patches(x, patch, pad=False):
    """Non-overlapping PxPxC patches of (..., H, W, C) in row-major order -> (..., m, P*P*C)."""
    x = np.asarray(x)
    h, w, c = x.shape[-3:]
    if h % patch or w % patch:
        if not pad:
            raise ConfigurationError(f"{h}x{w} grid is not divisible by patch size {patch}")
        ph, pw = (-h) % patch, (-w) % patch
        widths = [(0, 0)] * (x.ndim - 3) + [(0, ph), (0, pw), (0, 0)]
        x = np.pad(x, widths)
        h, w = h + ph, w + pw
    lead = x.shape[:-3]
    gh, gw = h // patch, w // patch
    x = x.reshape(*lead, gh, patch, gw, patch, c)
    n = len(lead)
    x = x.transpose(*range(n), n, n + 2, n + 1, n + 3, n + 4)
    return x.reshape(*lead, gh * gw, patch * patch * c)


class GridEmbed(Module):
    """ViT-style patch embedding for disparity maps (C=1) and tactile frames (C=3)."""

    def __init__(self, d, height, width, channels, patch, rng, pad=False):
        self.patch = patch
        self.channels = channels
        self.pad = pad
        gh, gw = -(-height // patch), -(-width // patch)
        if not pad and (height % patch or width % patch):
            raise ConfigurationError(f"{height}x{width} grid is not divisible by patch size {patch}")
        self.grid = (gh, gw)
        self.num_tokens = gh * gw
        self.proj = Linear(patch * patch * channels, d, rng)
        self.pos = Parameter(trunc_normal(rng, (self.num_tokens, d)))

    def __call__(self, grids):
        grids = np.asarray(grids, dtype=T.get_dtype())
        if grids.ndim == 3:
            grids = grids[..., None]
        patches = grid_patches(grids, self.patch, self.pad)
        return add_positional(self.proj(T.Tensor(np.ascontiguousarray(patches))), self.pos)
