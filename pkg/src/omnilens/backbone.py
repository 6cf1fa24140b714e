"""The frozen transformer trunk and its projection into the teacher space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from omnilens.blocks import Block
from omnilens.errors import ConfigurationError
from omnilens.numerics import tensor as T
from omnilens.numerics.module import LayerNorm, Linear, Module, Parameter, trunc_normal

# Which trunk parts train, mirroring the encoder-design ablation grid.
MODES = {
    "lens": "frozen trunk, trainable ModEmbed + Lens",
    "scratch": "trunk trained from random init",
    "frozen": "frozen trunk, ModEmbed only (no lens)",
    "pt_tune": "trunk trained from its pretrained init",
}


@dataclass
class BackboneConfig:
    L: int = 4
    l_range: tuple | None = (1, 4)  # 1-based inclusive; None = no blocks
    d: int = 64
    heads: int = 4
    d_out: int = 32
    pos_len: int = 17
    use_cls: bool = True
    use_pos: bool = True
    final_norm: bool = True
    pool: str = "cls"  # "cls" or "mean"
    grid: tuple | None = None  # native (rows, cols) patch grid of the positional table
    mode: str = "lens"
    train_cls: bool = True
    train_proj: bool = True
    mlp_ratio: int = 4

    def blocks_used(self):
        if self.l_range is None:
            return []
        start, end = self.l_range
        return list(range(start - 1, end))

    def validate(self):
        if self.l_range is not None:
            start, end = self.l_range
            if not (1 <= start <= end <= self.L):
                raise ConfigurationError(f"block range {self.l_range} outside 1..{self.L}")
        if self.d % self.heads:
            raise ConfigurationError(f"{self.heads} heads do not divide width {self.d}")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown trunk mode {self.mode!r}")
        if self.pool not in ("cls", "mean"):
            raise ConfigurationError(f"unknown pooling {self.pool!r}")
        if self.pool == "cls" and not self.use_cls:
            raise ConfigurationError("class-token pooling needs use_cls")
        return self


class Trunk(Module):
    def __init__(self, cfg, rng):
        self.cfg = cfg
        self.blocks = [Block(cfg.d, cfg.heads, rng, cfg.mlp_ratio) for _ in range(cfg.L)]
        self.cls_token = Parameter(trunc_normal(rng, (1, cfg.d)))
        self.pos_table = Parameter(trunc_normal(rng, (cfg.pos_len, cfg.d)))
        self.norm = LayerNorm(cfg.d)
        self.proj = Linear(cfg.d, cfg.d_out, rng, bias=False)

    def pretrained_parameters(self):
        """Parameters that play the role of pretrained weights (frozen in the default mode)."""
        out = [p for b in self.blocks for p in b.parameters()]
        return out + [self.pos_table, self.norm.gain, self.norm.bias]

    def __call__(self, tokens):
        return trunk_forward(tokens, self)

    def embed(self, tokens):
        _, pooled = trunk_forward(tokens, self)
        return project_embedding(pooled, self)


def build_trunk(cfg, seed):
    """Deterministic stand-in for pretrained weights, frozen according to ``cfg.mode``."""
    cfg.validate()
    trunk = Trunk(cfg, np.random.default_rng(seed))
    trunk.assign_names("trunk.")
    tune_blocks = cfg.mode in ("scratch", "pt_tune")
    for p in trunk.pretrained_parameters():
        p.frozen = not tune_blocks
    trunk.cls_token.frozen = not (cfg.train_cls or tune_blocks)
    trunk.proj.weight.frozen = not (cfg.train_proj or tune_blocks)
    return trunk


def interpolation_matrix(old_len, new_len):
    """(new_len, old_len) endpoint-preserving linear resampling weights over the index axis."""
    if new_len < 1:
        raise ConfigurationError("interpolated length must be at least 1")
    w = np.zeros((new_len, old_len))
    if old_len == 1:
        w[:, 0] = 1.0
        return w
    if new_len == 1:
        w[0, 0] = 1.0
        return w
    pos = np.arange(new_len) * (old_len - 1) / (new_len - 1)
    lo = np.minimum(np.floor(pos).astype(int), old_len - 2)
    frac = pos - lo
    rows = np.arange(new_len)
    w[rows, lo] = 1.0 - frac
    w[rows, lo + 1] += frac
    return w


def interpolate_pos_table(table, new_len, n_prefix=1, grid=None, new_grid=None):
    """Resample a positional table to ``new_len`` rows; the first ``n_prefix`` (class) rows pass through.

    1-D linear resampling over the index axis by default, or bilinear over the
    native patch grid when ``grid`` and ``new_grid`` are given. Both keep the
    end points, so the identity length returns the table unchanged.
    """
    is_tensor = isinstance(table, T.Tensor)
    data = table.data if is_tensor else np.asarray(table)
    old_len = data.shape[0]
    if old_len < 2:
        raise ConfigurationError("positional table needs at least 2 rows")
    if new_len < 1:
        raise ConfigurationError("interpolated length must be at least 1")
    if new_len == old_len:
        return table
    body_old, body_new = old_len - n_prefix, new_len - n_prefix
    if body_new < 0:
        raise ConfigurationError(f"target length {new_len} shorter than {n_prefix} prefix rows")
    if grid is not None and new_grid is not None:
        if grid[0] * grid[1] != body_old or new_grid[0] * new_grid[1] != body_new:
            raise ConfigurationError("grid shapes do not match the table body")
        w = np.kron(interpolation_matrix(grid[0], new_grid[0]), interpolation_matrix(grid[1], new_grid[1]))
    else:
        w = interpolation_matrix(body_old, body_new) if body_new else np.zeros((0, body_old))
    full = np.zeros((new_len, old_len))
    full[:n_prefix, :n_prefix] = np.eye(n_prefix)
    full[n_prefix:, n_prefix:] = w
    if is_tensor:
        return T.matmul(T.Tensor(full.astype(data.dtype)), table)
    return full @ data


def trunk_forward(tokens, trunk):
    """Prepend the class token, add positions, run the configured block range.

    Returns (sequence output (B, n', d), pooled vector (B, d)).
    """
    cfg = trunk.cfg
    if tokens.shape[-1] != cfg.d:
        raise ConfigurationError(f"trunk width {cfg.d} does not match token width {tokens.shape[-1]}")
    b, n, _ = tokens.shape
    x = tokens
    if cfg.use_cls:
        cls = T.broadcast_to(trunk.cls_token.reshape(1, 1, cfg.d), (b, 1, cfg.d))
        x = T.concat([cls, x], axis=1)
    if cfg.use_pos:
        length = x.shape[1]
        prefix = 1 if cfg.use_cls else 0
        new_grid = None
        if cfg.grid is not None:
            side = int(round(np.sqrt(length - prefix)))
            if side * side == length - prefix:
                new_grid = (side, side)
        pos = interpolate_pos_table(trunk.pos_table, length, prefix, cfg.grid, new_grid)
        x = x + pos
    for i in cfg.blocks_used():
        x = trunk.blocks[i](x)
    if cfg.final_norm:
        x = trunk.norm(x)
    if cfg.pool == "cls":
        pooled = x[:, 0, :]
    else:
        start = 1 if cfg.use_cls else 0
        pooled = x[:, start:, :].mean(axis=1)
    return x, pooled


def project_embedding(pooled, trunk):
    """Linear map to the teacher dimension followed by L2 normalization."""
    return T.l2_normalize(trunk.proj(pooled), axis=-1)


def snapshot(trunk):
    return {id(p): p.data.copy() for p in trunk.pretrained_parameters()}


def assert_frozen(trunk, snap):
    """True iff every pretrained-role parameter is bit-identical to ``snap``."""
    for p in trunk.pretrained_parameters():
        ref = snap.get(id(p))
        if ref is None or ref.shape != p.data.shape or ref.tobytes() != p.data.tobytes():
            return False
    return True
