"""Linear probing: a softmax classifier trained on frozen features by full-batch gradient descent."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from omnilens.errors import ConfigurationError


@dataclass
class ProbeConfig:
    lr: float = 0.5
    max_iters: int = 500
    l2: float = 1e-3
    tol: float = 1e-6


def probe_objective(w, b, x, y, l2):
    """Mean softmax cross-entropy plus (l2/2)·||W||²; the bias is not regularized."""
    logits = x @ w + b
    logits = logits - logits.max(axis=1, keepdims=True)
    log_p = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    return -log_p[np.arange(len(y)), y].mean() + 0.5 * l2 * np.sum(w * w)


def fit_softmax(x, y, n_classes, cfg=None):
    """Returns (W (d, C), b (C,)) after gradient descent stops on grad-norm tolerance or max_iters."""
    cfg = cfg or ProbeConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    n, d = x.shape
    w = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    onehot = np.eye(n_classes)[y]
    for _ in range(cfg.max_iters):
        logits = x @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        err = (p - onehot) / n
        gw = x.T @ err + cfg.l2 * w
        gb = err.sum(axis=0)
        if np.sqrt(np.sum(gw * gw) + np.sum(gb * gb)) < cfg.tol:
            break
        w -= cfg.lr * gw
        b -= cfg.lr * gb
    return w, b


def sample_shots(labels, shots, n_classes, seed):
    """Indices of ``shots`` examples per class, drawn without replacement from a seeded stream."""
    if shots < 1:
        raise ConfigurationError("shots must be at least 1")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(n_classes):
        pool = np.flatnonzero(labels == c)
        if len(pool) < shots:
            raise ConfigurationError(f"class {c} has {len(pool)} training examples, fewer than {shots} shots")
        chosen.extend(sorted(rng.choice(pool, size=shots, replace=False).tolist()))
    return np.array(chosen, dtype=np.int64)


def linear_probe(train_x, train_y, test_x, test_y, shots, cfg=None, seed=0, n_classes=None):
    """Test accuracy of a softmax probe fit on ``shots`` seeded examples per class."""
    train_y = np.asarray(train_y)
    n_classes = int(max(train_y.max(), np.max(test_y)) + 1) if n_classes is None else n_classes
    idx = sample_shots(train_y, shots, n_classes, seed)
    w, b = fit_softmax(np.asarray(train_x)[idx], train_y[idx], n_classes, cfg)
    pred = np.argmax(np.asarray(test_x) @ w + b, axis=1)
    return float(np.mean(pred == np.asarray(test_y)))
