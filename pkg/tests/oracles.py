"""Explicit-loop reference implementations of the transformer pieces, for tests only."""
import numpy as np


def randomize(module, rng, scale=0.3):
    """Fill every parameter (including zero-initialized biases) with random values."""
    for p in module.parameters():
        p.data = (rng.standard_normal(p.shape) * scale + (1.0 if p.name.endswith("gain") else 0.0)).astype(p.data.dtype)
    return module


def layer_norm(v, gain, bias, eps=1e-5):
    mu = sum(v) / len(v)
    var = sum((x - mu) ** 2 for x in v) / len(v)
    return np.array([(x - mu) / np.sqrt(var + eps) * g + b for x, g, b in zip(v, gain, bias)])


def gelu(z):
    return 0.5 * z * (1 + np.tanh(np.sqrt(2 / np.pi) * (z + 0.044715 * z**3)))


def linear(x, lin):
    out = x @ lin.weight.data
    return out + lin.bias.data if lin.bias is not None else out


def attention(queries, context, attn):
    """Per-head, per-query loops over keys."""
    d, heads = attn.d, attn.heads
    dh = d // heads
    q = np.array([linear(x, attn.q) for x in queries])
    k = np.array([linear(x, attn.k) for x in context])
    v = np.array([linear(x, attn.v) for x in context])
    mixed = np.zeros((len(queries), d))
    for h in range(heads):
        cols = slice(h * dh, (h + 1) * dh)
        for i in range(len(queries)):
            scores = [float(np.dot(q[i, cols], k[j, cols])) / np.sqrt(dh) for j in range(len(context))]
            top = max(scores)
            w = [np.exp(s - top) for s in scores]
            total = sum(w)
            for j in range(len(context)):
                mixed[i, cols] += w[j] / total * v[j, cols]
    return np.array([linear(x, attn.out) for x in mixed])


def mlp(x, m):
    return linear(gelu(linear(x, m.fc1)), m.fc2)


def block(x, blk):
    h = np.array([layer_norm(r, blk.ln1.gain.data, blk.ln1.bias.data) for r in x])
    x = x + attention(h, h, blk.attn)
    h = np.array([layer_norm(r, blk.ln2.gain.data, blk.ln2.bias.data) for r in x])
    return x + np.array([mlp(r, blk.mlp) for r in h])


def cross_block(latents, tokens, blk):
    q = np.array([layer_norm(r, blk.ln_q.gain.data, blk.ln_q.bias.data) for r in latents])
    kv = np.array([layer_norm(r, blk.ln_kv.gain.data, blk.ln_kv.bias.data) for r in tokens])
    x = latents + attention(q, kv, blk.attn)
    h = np.array([layer_norm(r, blk.ln2.gain.data, blk.ln2.bias.data) for r in x])
    return x + np.array([mlp(r, blk.mlp) for r in h])
