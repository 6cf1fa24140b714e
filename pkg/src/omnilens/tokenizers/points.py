"""Point-cloud tokenization: farthest point sampling, kNN patches, mini-PointNet."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from omnilens import _kernels
from omnilens.errors import DegenerateInputError
from omnilens.numerics import tensor as T
from omnilens.numerics.module import Linear, Module


@dataclass
class GroupedPointPatches:
    centers: np.ndarray  # (g, 3)
    groups: np.ndarray  # (g, k, 3), center-subtracted
    indices: np.ndarray  # (g, k) into the source cloud


def _check_cloud(points):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] < 1:
        raise DegenerateInputError(f"expected a non-empty (P, 3) cloud, got {points.shape}")
    if not np.all(np.isfinite(points)):
        raise DegenerateInputError("point cloud contains non-finite coordinates")
    return points


def fps(points, g, start_index=0):
    """Indices of ``g`` centers chosen by farthest point sampling.

    Each new index maximizes the minimum distance to those already chosen;
    ties go to the lowest index.
    """
    points = _check_cloud(points)
    n = points.shape[0]
    if g > n:
        raise DegenerateInputError(f"cannot sample {g} centers from {n} points")
    if not 0 <= start_index < n:
        raise DegenerateInputError(f"start index {start_index} outside [0, {n})")
    return _kernels.fps(points, g, start_index)


def knn_group(points, centers, k):
    points = _check_cloud(points)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    if k > points.shape[0]:
        raise DegenerateInputError(f"k={k} exceeds the {points.shape[0]} available points")
    idx = _kernels.knn(points, centers, k)
    groups = points[idx] - centers[:, None, :]
    return GroupedPointPatches(centers=centers, groups=groups, indices=idx)


def group_points(points, g, k, start_index=0, rng=None):
    """FPS + kNN in one call; tiny clouds are resampled with replacement first."""
    points = _check_cloud(points)
    need = max(g, k)
    if points.shape[0] < need:
        rng = np.random.default_rng(0) if rng is None else rng
        extra = rng.integers(0, points.shape[0], size=need - points.shape[0])
        points = np.concatenate([points, points[extra]], axis=0)
    centers = points[fps(points, g, start_index)]
    return knn_group(points, centers, k)


class MiniPointNet(Module):
    """Shared per-point MLP, max-pool over each group, then a linear map to width d."""

    def __init__(self, d, rng, widths=(32, 64)):
        self.layers = []
        d_in = 3
        for w in widths:
            self.layers.append(Linear(d_in, w, rng))
            d_in = w
        self.out = Linear(d_in, d, rng)

    def __call__(self, groups):
        # groups: (B, g, k, 3) local coordinates, not differentiated
        x = T.Tensor(np.asarray(groups, dtype=T.get_dtype()))
        for layer in self.layers:
            x = T.gelu(layer(x))
        pooled = T.amax(x, axis=-2)
        return self.out(pooled)


class PointEmbed(Module):
    """mini-PointNet tokens plus a learned embedding of each group's center."""

    def __init__(self, d, g, k, rng, widths=(32, 64)):
        self.g = g
        self.k = k
        self.pointnet = MiniPointNet(d, rng, widths)
        self.pos1 = Linear(3, d, rng)
        self.pos2 = Linear(d, d, rng, std=0.02)

    def prepare(self, points, rng=None):
        patches = group_points(points, self.g, self.k, rng=rng)
        return patches.centers, patches.groups

    def __call__(self, centers, groups):
        tokens = self.pointnet(groups)
        c = T.Tensor(np.asarray(centers, dtype=T.get_dtype()))
        return tokens + self.pos2(T.gelu(self.pos1(c)))
