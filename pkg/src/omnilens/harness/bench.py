"""Analytic FLOP model and wall-time measurements for lens routing.

FLOPs count a multiply-add as two operations. For a self-attention block on
n tokens of width d: 8nd² (q, k, v, out projections) + 4n²d (QKᵀ and AV)
+ 4·r·nd² (MLP with hidden width r·d). Cross-attention with n queries over m
tokens: 4nd² + 4md² + 4nmd + 4·r·nd². Layer norms and softmax are not counted.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass

import numpy as np

from omnilens.backbone import BackboneConfig, build_trunk, trunk_forward
from omnilens.blocks import attention_score_flops, block_flops, cross_block_flops
from omnilens.lens import ITER_CS_ATTN, S_ATTN, LensConfig, build_lens
from omnilens.numerics import tensor as T


@dataclass
class BenchRow:
    variant: str
    m: int
    n: int
    lens_flops: int
    trunk_flops: int
    trunk_score_flops: int
    lens_params: int
    wall_ms: float


def lens_flops(cfg, m):
    if cfg.variant == S_ATTN:
        return cfg.depth * block_flops(m, cfg.d, cfg.mlp_ratio)
    per_block = cross_block_flops(cfg.n_latents, m, cfg.d, cfg.mlp_ratio)
    per_block += cfg.self_layers * block_flops(cfg.n_latents, cfg.d, cfg.mlp_ratio)
    return cfg.depth * per_block


def trunk_length(lens_cfg, m, use_cls=True):
    """Sequence length the trunk sees: m tokens under full-length routing, n latents under Iter-CS-Attn."""
    n = m if lens_cfg is None or lens_cfg.variant == S_ATTN else lens_cfg.n_latents
    return n + (1 if use_cls else 0)


def trunk_flops(bcfg, length):
    return len(bcfg.blocks_used()) * block_flops(length, bcfg.d, bcfg.mlp_ratio)


def trunk_score_flops(bcfg, length):
    return len(bcfg.blocks_used()) * attention_score_flops(length, length, bcfg.d)


def _median_time(fn, reps):
    times = []
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def time_forward(lens, trunk, m, d, reps=3, seed=0):
    """Median seconds for one no-grad forward of lens + trunk on a batch of one."""
    tokens = T.Tensor(np.random.default_rng(seed).standard_normal((1, m, d)).astype(T.get_dtype()))

    def run():
        with T.no_grad():
            x = lens(tokens) if lens is not None else tokens
            trunk_forward(x, trunk)

    run()
    return _median_time(run, reps)


def _attention_core(q, k, v, block):
    # row blocks keep the score tile cache-resident so time tracks arithmetic, not memory
    for h in range(q.shape[0]):
        kt = k[h].T
        for start in range(0, q.shape[1], block):
            s = q[h, start : start + block] @ kt
            s -= s.max(axis=1, keepdims=True)
            np.exp(s, out=s)
            s /= s.sum(axis=1, keepdims=True)
            s @ v[h]


def time_attention_scores(m, d, heads=4, reps=9, seed=0, block=128, dtype=np.float64):
    """Best-of-``reps`` seconds for the quadratic attention core (QKᵀ, softmax, AV) on m tokens."""
    return time_attention_sweep([m], d, heads, reps, seed, block, dtype)[0]


def time_attention_sweep(ms, d, heads=4, reps=9, seed=0, block=128, dtype=np.float64):
    """Best-of-``reps`` seconds per m, with the rounds interleaved across m.

    Interleaving spreads transient machine slowdowns over every length instead
    of letting one burst land on a single m and skew the fitted curve.
    """
    rng = np.random.default_rng(seed)
    inputs = []
    for m in ms:
        q, k, v = (rng.standard_normal((heads, m, d // heads)).astype(dtype) for _ in range(3))
        q *= 1.0 / np.sqrt(d // heads)
        _attention_core(q, k, v, block)
        inputs.append((q, k, v))
    best = [float("inf")] * len(ms)
    for _ in range(reps):
        for i, (q, k, v) in enumerate(inputs):
            start = time.perf_counter()
            _attention_core(q, k, v, block)
            best[i] = min(best[i], time.perf_counter() - start)
    return best


def quadratic_fit(ms, seconds):
    """Least-squares c in t = c·m²; returns (c, measured / predicted per m)."""
    ms = np.asarray(ms, dtype=np.float64)
    t = np.asarray(seconds, dtype=np.float64)
    c = float(np.sum(t * ms**2) / np.sum(ms**4))
    return c, t / (c * ms**2)


def bench_flops(ms, lens_cfgs, backbone=None, measure=True, reps=3, seed=0):
    """One row per (lens config, m); ``None`` as a lens config means full-length routing with no lens."""
    bcfg = backbone or BackboneConfig()
    trunk = build_trunk(bcfg, seed) if measure else None
    rows = []
    for lcfg in lens_cfgs:
        lens = build_lens(lcfg, np.random.default_rng(seed)) if lcfg is not None else None
        for m in ms:
            length = trunk_length(lcfg, m, bcfg.use_cls)
            rows.append(
                BenchRow(
                    variant="none" if lcfg is None else lcfg.variant + ("_tied" if lcfg.tie_weights else ""),
                    m=m,
                    n=length - (1 if bcfg.use_cls else 0),
                    lens_flops=lens_flops(lcfg, m) if lcfg is not None else 0,
                    trunk_flops=trunk_flops(bcfg, length),
                    trunk_score_flops=trunk_score_flops(bcfg, length),
                    lens_params=lens.num_parameters(trainable_only=True) if lens is not None else 0,
                    wall_ms=1e3 * time_forward(lens, trunk, m, bcfg.d, reps, seed) if measure else float("nan"),
                )
            )
    return rows


def default_grid(d=64, heads=4, n_latents=16):
    return [
        LensConfig(variant=S_ATTN, depth=2, d=d, heads=heads),
        LensConfig(variant=ITER_CS_ATTN, depth=2, self_layers=1, d=d, heads=heads, n_latents=n_latents),
        LensConfig(variant=ITER_CS_ATTN, depth=4, self_layers=1, tie_weights=True, d=d, heads=heads, n_latents=n_latents),
    ]


def rows_to_csv(rows):
    buf = io.StringIO()
    fields = list(BenchRow.__dataclass_fields__)
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow(asdict(r))
    return buf.getvalue()
