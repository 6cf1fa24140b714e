from __future__ import annotations

import math

import numpy as np


def decays(param):
    """Weight decay applies to matrices only: norm gains, biases and the temperature are exempt."""
    return param.ndim >= 2 and not param.name.endswith("log_tau")


class AdamW:
    """Decoupled weight-decay Adam. Frozen parameters are skipped entirely."""

    def __init__(self, params, lr=2e-4, betas=(0.9, 0.98), eps=1e-8, weight_decay=0.2):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.frozen or p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if lr == 0.0:
                continue
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay and decays(p):
                update = update + self.weight_decay * p.data
            p.data = (p.data - lr * update).astype(p.data.dtype, copy=False)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def state_dict(self):
        """Moments keyed by parameter name, plus the step counter."""
        state = {"optim.step": np.array(self.step_count, dtype=np.float64)}
        for p, m, v in zip(self.params, self._m, self._v):
            state[f"optim.m.{p.name}"] = m
            state[f"optim.v.{p.name}"] = v
        return state

    def load_state_dict(self, state):
        self.step_count = int(state["optim.step"])
        for p, m, v in zip(self.params, self._m, self._v):
            m[...] = state[f"optim.m.{p.name}"]
            v[...] = state[f"optim.v.{p.name}"]


def warmup_cosine(step, peak_lr, warmup_steps, total_steps, min_lr=0.0):
    """Linear warmup to ``peak_lr`` then cosine decay to ``min_lr`` at ``total_steps``."""
    if warmup_steps > 0 and step < warmup_steps:
        return peak_lr * (step + 1) / warmup_steps
    if total_steps <= warmup_steps:
        return peak_lr
    progress = min(1.0, (step - warmup_steps) / max(1, total_steps - warmup_steps))
    return min_lr + 0.5 * (peak_lr - min_lr) * (1.0 + math.cos(math.pi * progress))
