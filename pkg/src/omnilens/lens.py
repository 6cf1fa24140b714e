"""Lens adapters mapping modality tokens into the trunk's input space.

``S-Attn`` keeps the sequence length; ``Iter-CS-Attn`` compresses any number
of input tokens into a fixed set of learned latents.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from omnilens.blocks import Block, CrossBlock
from omnilens.errors import ConfigurationError
from omnilens.numerics import tensor as T
from omnilens.numerics.module import Module, Parameter, trunc_normal

S_ATTN = "s_attn"
ITER_CS_ATTN = "iter_cs_attn"


@dataclass
class LensConfig:
    variant: str = ITER_CS_ATTN
    depth: int = 2  # N: blocks (S-Attn) or basis blocks (Iter-CS-Attn)
    self_layers: int = 1  # M: self-attention layers per basis block
    tie_weights: bool = False
    n_latents: int = 16
    d: int = 64
    heads: int = 4
    mlp_ratio: int = 4
    init_from_backbone: tuple | None = None  # 1-based inclusive trunk block range

    def validate(self):
        if self.variant not in (S_ATTN, ITER_CS_ATTN):
            raise ConfigurationError(f"unknown lens variant {self.variant!r}")
        if self.d % self.heads:
            raise ConfigurationError(f"{self.heads} heads do not divide width {self.d}")
        if self.depth < 0:
            raise ConfigurationError("lens depth must be non-negative")
        if self.variant == ITER_CS_ATTN:
            if self.n_latents < 1:
                raise ConfigurationError("Iter-CS-Attn needs at least one latent")
            if self.depth < 1:
                raise ConfigurationError("Iter-CS-Attn needs at least one basis block")
        if self.tie_weights and (self.variant != ITER_CS_ATTN or self.depth < 2):
            raise ConfigurationError("weight tying needs an Iter-CS-Attn lens with at least 2 basis blocks")
        if self.init_from_backbone is not None and self.variant != S_ATTN:
            raise ConfigurationError("initialization from trunk blocks applies to S-Attn lenses only")
        return self


class SAttnLens(Module):
    def __init__(self, cfg, rng):
        self.cfg = cfg
        self.blocks = [Block(cfg.d, cfg.heads, rng, cfg.mlp_ratio) for _ in range(cfg.depth)]

    def __call__(self, tokens):
        if tokens.shape[-1] != self.cfg.d:
            raise ConfigurationError(f"lens width {self.cfg.d} does not match token width {tokens.shape[-1]}")
        x = tokens
        for block in self.blocks:
            x = block(x)
        return x


class BasisBlock(Module):
    def __init__(self, cfg, rng):
        self.cross = CrossBlock(cfg.d, cfg.heads, rng, cfg.mlp_ratio)
        self.tower = [Block(cfg.d, cfg.heads, rng, cfg.mlp_ratio) for _ in range(cfg.self_layers)]

    def __call__(self, latents, tokens):
        x = self.cross(latents, tokens)
        for block in self.tower:
            x = block(x)
        return x


class IterCSAttnLens(Module):
    """N basis blocks of cross-attention + M self-attention layers over n latents.

    With ``tie_weights`` every block from the second on is the same object, so
    gradients from all of them accumulate into one set of storages.
    """

    def __init__(self, cfg, rng):
        self.cfg = cfg
        self.latents = Parameter(trunc_normal(rng, (cfg.n_latents, cfg.d)))
        self.blocks = tie_parameters(cfg, [BasisBlock(cfg, rng) for _ in range(_distinct_blocks(cfg))])

    def __call__(self, tokens):
        if tokens.shape[-1] != self.cfg.d:
            raise ConfigurationError(f"lens width {self.cfg.d} does not match token width {tokens.shape[-1]}")
        b = tokens.shape[0]
        x = T.broadcast_to(self.latents, (b,) + self.latents.shape)
        for block in self.blocks:
            x = block(x, tokens)
        return x


def _distinct_blocks(cfg):
    return min(cfg.depth, 2) if cfg.tie_weights else cfg.depth


def tie_parameters(cfg, blocks):
    """Expand distinct blocks to ``cfg.depth`` entries; blocks 2..N alias block 2 when tying."""
    if not cfg.tie_weights:
        return list(blocks)
    if cfg.depth < 2:
        raise ConfigurationError("weight tying needs at least 2 basis blocks")
    return [blocks[0]] + [blocks[1]] * (cfg.depth - 1)


def build_lens(cfg, rng):
    cfg.validate()
    if cfg.variant == S_ATTN:
        return SAttnLens(cfg, rng)
    return IterCSAttnLens(cfg, rng)


def init_from_backbone(lens, trunk, block_range):
    """Copy trunk blocks ``block_range`` (1-based, inclusive) into an S-Attn lens as trainable copies."""
    if not isinstance(lens, SAttnLens):
        raise ConfigurationError("only S-Attn lenses can be initialized from trunk blocks")
    start, end = block_range
    if not (1 <= start <= end <= len(trunk.blocks)):
        raise ConfigurationError(f"block range {block_range} outside trunk of {len(trunk.blocks)} blocks")
    if end - start + 1 != len(lens.blocks):
        raise ConfigurationError(f"block range {block_range} does not match lens depth {len(lens.blocks)}")
    for i, src in enumerate(trunk.blocks[start - 1 : end]):
        clone = copy.deepcopy(src)
        for p in clone.parameters():
            p.data = np.array(p.data, copy=True)
            p.frozen = False
        lens.blocks[i] = clone
    return lens
