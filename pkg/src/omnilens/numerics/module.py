"""Parameters and a small container protocol for building models."""
from __future__ import annotations

import numpy as np

from omnilens.numerics import tensor as T
from omnilens.numerics.tensor import Tensor


class Parameter(Tensor):
    """A leaf tensor owned by a model. Frozen parameters never build graph edges."""

    __slots__ = ("name", "_frozen")

    def __init__(self, data, name="", frozen=False):
        super().__init__(np.array(data, dtype=T.get_dtype()), requires_grad=not frozen)
        self.name = name
        self._frozen = frozen

    @property
    def frozen(self):
        return self._frozen

    @frozen.setter
    def frozen(self, value):
        self._frozen = bool(value)
        self.requires_grad = not value
        if value:
            self.grad = None

    def __repr__(self):
        state = "frozen" if self._frozen else "trainable"
        return f"Parameter({self.name!r}, shape={self.shape}, {state})"


def trunc_normal(rng, shape, std=0.02):
    values = rng.standard_normal(shape)
    values = np.clip(values, -2.0, 2.0)
    return values * std


class Module:
    """Walks attributes in assignment order to enumerate parameters.

    Shared sub-modules are visited once, under the first name reached; this is
    how tied blocks collapse to a single set of storages.
    """

    def named_parameters(self, prefix="", _seen=None):
        seen = set() if _seen is None else _seen
        for key, value in vars(self).items():
            yield from _walk(value, f"{prefix}{key}", seen)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self):
        return [p for p in self.parameters() if not p.frozen]

    def num_parameters(self, trainable_only=False):
        params = self.trainable_parameters() if trainable_only else self.parameters()
        return sum(p.size for p in params)

    def set_frozen(self, frozen=True):
        for p in self.parameters():
            p.frozen = frozen
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def assign_names(self, prefix=""):
        for name, p in self.named_parameters(prefix):
            p.name = name
        return self

    def state_dict(self, prefix=""):
        return {name: p.data for name, p in self.named_parameters(prefix)}

    def load_state_dict(self, state, prefix="", strict=True):
        own = dict(self.named_parameters(prefix))
        if strict:
            missing = sorted(set(own) - set(state))
            if missing:
                raise KeyError(f"missing parameters in state: {missing[:5]}")
        for name, p in own.items():
            if name in state:
                value = np.asarray(state[name])
                if value.shape != p.shape:
                    raise ValueError(f"shape mismatch for {name}: {value.shape} vs {p.shape}")
                p.data = value.astype(p.data.dtype, copy=True)


def _walk(value, name, seen):
    if isinstance(value, Parameter):
        if id(value) not in seen:
            seen.add(id(value))
            yield name, value
    elif isinstance(value, Module):
        if id(value) not in seen:
            seen.add(id(value))
            yield from value.named_parameters(f"{name}.", seen)
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}", seen)


class Linear(Module):
    def __init__(self, d_in, d_out, rng, bias=True, std=None):
        std = 1.0 / np.sqrt(d_in) if std is None else std
        self.weight = Parameter(rng.standard_normal((d_in, d_out)) * std)
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x):
        y = T.matmul(x, self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y


class LayerNorm(Module):
    def __init__(self, d, eps=1e-5):
        self.gain = Parameter(np.ones(d))
        self.bias = Parameter(np.zeros(d))
        self.eps = eps

    def __call__(self, x):
        return T.layer_norm(x, self.gain, self.bias, self.eps)
