"""Pre-norm transformer blocks shared by the lens, the trunk and the teachers."""
from __future__ import annotations

import math

from omnilens.errors import ConfigurationError
from omnilens.numerics import tensor as T
from omnilens.numerics.module import LayerNorm, Linear, Module


class Attention(Module):
    def __init__(self, d, heads, rng):
        if d % heads:
            raise ConfigurationError(f"{heads} heads do not divide width {d}")
        self.heads = heads
        self.d = d
        std = 1.0 / math.sqrt(d)
        self.q = Linear(d, d, rng, std=std)
        # no key bias: it shifts every score in a row equally, which softmax cancels
        self.k = Linear(d, d, rng, bias=False, std=std)
        self.v = Linear(d, d, rng, std=std)
        self.out = Linear(d, d, rng, std=std)

    def _split(self, x):
        b, n, _ = x.shape
        return x.reshape(b, n, self.heads, self.d // self.heads).transpose(0, 2, 1, 3)

    def __call__(self, queries, context):
        """Multi-head attention of ``queries`` (B, n, d) over ``context`` (B, m, d)."""
        if queries.shape[-1] != self.d or context.shape[-1] != self.d:
            raise ConfigurationError(f"attention width {self.d} vs inputs {queries.shape}, {context.shape}")
        b, n, _ = queries.shape
        q = self._split(self.q(queries))
        k = self._split(self.k(context))
        v = self._split(self.v(context))
        scores = T.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(self.d // self.heads))
        weights = T.softmax(scores, axis=-1)
        mixed = T.matmul(weights, v).transpose(0, 2, 1, 3).reshape(b, n, self.d)
        return self.out(mixed)


class MLP(Module):
    def __init__(self, d, hidden, rng):
        self.fc1 = Linear(d, hidden, rng)
        self.fc2 = Linear(hidden, d, rng, std=1.0 / math.sqrt(hidden))

    def __call__(self, x):
        return self.fc2(T.gelu(self.fc1(x)))


class Block(Module):
    """x + attn(ln(x)), then x + mlp(ln(x))."""

    def __init__(self, d, heads, rng, mlp_ratio=4):
        self.ln1 = LayerNorm(d)
        self.attn = Attention(d, heads, rng)
        self.ln2 = LayerNorm(d)
        self.mlp = MLP(d, d * mlp_ratio, rng)

    def __call__(self, x):
        h = self.ln1(x)
        x = x + self.attn(h, h)
        return x + self.mlp(self.ln2(x))


class CrossBlock(Module):
    """Latents attend to input tokens (queries from latents, keys/values from tokens), then an MLP."""

    def __init__(self, d, heads, rng, mlp_ratio=4):
        self.ln_q = LayerNorm(d)
        self.ln_kv = LayerNorm(d)
        self.attn = Attention(d, heads, rng)
        self.ln2 = LayerNorm(d)
        self.mlp = MLP(d, d * mlp_ratio, rng)

    def __call__(self, latents, tokens):
        x = latents + self.attn(self.ln_q(latents), self.ln_kv(tokens))
        return x + self.mlp(self.ln2(x))


def attention_score_flops(n_queries, n_keys, d):
    """Multiply-adds counted as 2 FLOPs: QK^T plus weights @ V."""
    return 2 * 2 * n_queries * n_keys * d


def block_flops(n, d, mlp_ratio=4):
    """Self-attention block on n tokens: projections, scores and MLP."""
    projections = 2 * 4 * n * d * d
    mlp = 2 * 2 * n * d * d * mlp_ratio
    return projections + attention_score_flops(n, n, d) + mlp


def cross_block_flops(n, m, d, mlp_ratio=4):
    projections = 2 * (2 * n * d * d + 2 * m * d * d)
    mlp = 2 * 2 * n * d * d * mlp_ratio
    return projections + attention_score_flops(n, m, d) + mlp
