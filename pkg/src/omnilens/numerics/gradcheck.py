"""Central finite differences as an independent check on :func:`backward`."""
from __future__ import annotations

import numpy as np

from omnilens.numerics.tensor import no_grad


def finite_diff_grad(f, params, h=1e-5, order=2):
    """Numerical gradient of scalar ``f()`` w.r.t. each parameter, coordinate by coordinate.

    ``order=2`` is the two-point central difference (f(x+h) - f(x-h)) / 2h;
    ``order=4`` the four-point central stencil
    (-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h, whose O(h^4) truncation
    error allows a larger h and so less round-off. ``f`` must be deterministic.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    grads = []
    with no_grad():
        for p in params:
            g = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = float(f().data)
                flat[i] = orig - h
                down = float(f().data)
                if order == 2:
                    gflat[i] = (up - down) / (2.0 * h)
                else:
                    flat[i] = orig + 2 * h
                    up2 = float(f().data)
                    flat[i] = orig - 2 * h
                    down2 = float(f().data)
                    gflat[i] = (8.0 * (up - down) - (up2 - down2)) / (12.0 * h)
                flat[i] = orig
            grads.append(g)
    return grads


def analytic_grad(f, params):
    for p in params:
        p.grad = None
    loss = f()
    loss.backward()
    return [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]


def max_relative_error(analytic, numeric, floor=1e-8):
    """Largest |a - n| / max(|a|, |n|, floor) over all coordinates."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        if a.size:
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def check_gradients(f, params, h=1e-5, order=2):
    """Return (max relative error, analytic grads, numeric grads)."""
    analytic = analytic_grad(f, params)
    numeric = finite_diff_grad(f, params, h, order)
    return max_relative_error(analytic, numeric), analytic, numeric
