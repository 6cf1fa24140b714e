"""Multi-anchor symmetric contrastive objective with a learnable temperature."""
from __future__ import annotations

import math

import numpy as np

from omnilens.errors import InputError
from omnilens.numerics import tensor as T
from omnilens.numerics.module import Module, Parameter


class Temperature(Module):
    """tau = exp(log_tau), clamped to [tau_min, tau_max]; one tau shared by all anchors."""

    def __init__(self, init=0.07, tau_min=0.01, tau_max=1.0):
        self.log_tau = Parameter(np.array(math.log(init)), name="temperature.log_tau")
        self.tau_min = tau_min
        self.tau_max = tau_max

    def __call__(self):
        return effective_tau(self)


def effective_tau(temp):
    return T.clip(T.exp(temp.log_tau), temp.tau_min, temp.tau_max)


def _as_tensor(x):
    return x if isinstance(x, T.Tensor) else T.Tensor(np.asarray(x, dtype=T.get_dtype()))


def directional_terms(h_x, h_a, tau):
    """Mean of -log p over the batch for X->A (rows) and A->X (columns) of one anchor."""
    h_x, h_a = _as_tensor(h_x), _as_tensor(h_a)
    b = h_x.shape[0]
    logits = T.matmul(h_x, h_a.transpose(1, 0)) / tau
    diag = (np.arange(b), np.arange(b))
    x_to_a = -T.log_softmax(logits, axis=1)[diag].mean()
    a_to_x = -T.log_softmax(logits, axis=0)[diag].mean()
    return x_to_a, a_to_x


def anchor_loss(h_x, h_a, tau):
    x_to_a, a_to_x = directional_terms(h_x, h_a, tau)
    return (x_to_a + a_to_x) * 0.5


def multi_anchor_weighting(per_anchor_losses):
    """Unweighted mean over anchors."""
    if not per_anchor_losses:
        raise InputError("at least one anchor loss is required")
    total = per_anchor_losses[0]
    for loss in per_anchor_losses[1:]:
        total = total + loss
    return total * (1.0 / len(per_anchor_losses))


def contrastive_loss(h_x, anchor_embeddings, temp):
    """-1/(2 B |A|) sum_i sum_k [log softmax_j(h_i^X . h_j^Ak / tau) + log softmax_j(h_i^Ak . h_j^X / tau)].

    ``h_x`` is (B, d) unit-norm; ``anchor_embeddings`` is a list with one
    (B, d) unit-norm array per anchor, row-aligned with ``h_x``.
    """
    h_x = _as_tensor(h_x)
    if h_x.shape[0] == 0:
        raise InputError("empty batch")
    tau = temp() if isinstance(temp, Temperature) else _as_tensor(temp)
    losses = []
    for h_a in anchor_embeddings:
        if h_a.shape[0] != h_x.shape[0]:
            raise InputError("anchor rows are not aligned with the modality batch")
        losses.append(anchor_loss(h_x, h_a, tau))
    return multi_anchor_weighting(losses)


def training_step(encoder, inputs, anchor_targets, optimizer, lr=None):
    """Forward, loss, backward, update trainable parameters, reset gradients. Returns the loss value."""
    encoder.zero_grad()
    h = encoder.embed(inputs)
    loss = contrastive_loss(h, anchor_targets, encoder.temperature)
    loss.backward()
    optimizer.step(lr)
    optimizer.zero_grad()
    encoder.zero_grad()
    return float(loss.data)
