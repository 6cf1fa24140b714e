"""Training-time augmentation per modality.

Every transform is gated by a probability so that a policy with all
probabilities and mask lengths at zero is exactly the identity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from omnilens.errors import ConfigurationError

MODALITIES = ("points", "audio", "depth", "tactile", "eeg")


@dataclass
class AugmentPolicy:
    modality: str
    # audio
    freq_mask: int = 12
    time_mask: int = 48
    mixup_prob: float = 0.5
    mixup_alpha: float = 0.5
    # points
    dropout_prob: float = 1.0
    max_dropout: float = 0.875
    scale_prob: float = 1.0
    scale_range: tuple = (0.8, 1.25)
    shift_prob: float = 1.0
    shift_range: float = 0.1
    perturb_prob: float = 1.0
    perturb_sigma: float = 0.06
    perturb_clip: float = 0.18
    rotate_prob: float = 1.0
    # depth / tactile
    crop_prob: float = 1.0
    crop_scale: tuple = (0.6, 1.0)
    hflip_prob: float = 0.5
    vflip_prob: float = 0.0
    rot90_prob: float = 0.0
    extra: dict = field(default_factory=dict)

    @classmethod
    def disabled(cls, modality):
        return cls(
            modality=modality, freq_mask=0, time_mask=0, mixup_prob=0.0,
            dropout_prob=0.0, scale_prob=0.0, shift_prob=0.0, perturb_prob=0.0,
            rotate_prob=0.0, crop_prob=0.0, hflip_prob=0.0, vflip_prob=0.0, rot90_prob=0.0,
        )

    @classmethod
    def default(cls, modality):
        if modality == "tactile":
            return cls(modality=modality, vflip_prob=0.5, rot90_prob=1.0)
        return cls(modality=modality)


def mask_span(values, axis, start, width):
    """Zero ``width`` consecutive rows/columns beginning at ``start`` along ``axis``."""
    out = np.array(values, copy=True)
    index = [slice(None)] * out.ndim
    index[axis] = slice(start, start + width)
    out[tuple(index)] = 0.0
    return out


def spec_mask(values, max_width, axis, rng):
    """One random mask of width uniform in [0, max_width] along ``axis``."""
    if max_width <= 0:
        return values
    width = int(rng.integers(0, max_width + 1))
    size = values.shape[axis]
    width = min(width, size)
    start = int(rng.integers(0, size - width + 1))
    return mask_span(values, axis, start, width)


def mixup(x_a, x_b, target_a, target_b, lam):
    """Convex blend of two inputs and their anchor targets; targets are re-normalized after blending."""
    x = lam * np.asarray(x_a) + (1.0 - lam) * np.asarray(x_b)
    t = lam * np.asarray(target_a) + (1.0 - lam) * np.asarray(target_b)
    norm = np.linalg.norm(t, axis=-1, keepdims=True)
    return x, t / np.where(norm == 0, 1.0, norm)


def mixup_batch(inputs, targets, policy, rng):
    """Blend each sample with its batch neighbour (i+1 mod B) with probability ``policy.mixup_prob``.

    ``targets`` is a list of (B, d) anchor arrays, all blended with the same weights.
    """
    b = inputs.shape[0]
    if policy.mixup_prob <= 0 or b < 2:
        return inputs, targets
    apply = rng.random(b) < policy.mixup_prob
    lam = rng.beta(policy.mixup_alpha, policy.mixup_alpha, size=b)
    lam = np.where(apply, lam, 1.0)
    partner = np.roll(np.arange(b), -1)
    shape = (b,) + (1,) * (inputs.ndim - 1)
    mixed = lam.reshape(shape) * inputs + (1.0 - lam.reshape(shape)) * inputs[partner]
    out_targets = []
    for t in targets:
        blended = lam[:, None] * t + (1.0 - lam[:, None]) * t[partner]
        blended /= np.linalg.norm(blended, axis=-1, keepdims=True)
        out_targets.append(blended)
    return mixed.astype(inputs.dtype, copy=False), out_targets


def _rotation_z(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def augment_points(points, policy, rng):
    pts = np.array(points, dtype=np.float64, copy=True)
    if policy.dropout_prob > 0 and rng.random() < policy.dropout_prob:
        ratio = rng.random() * policy.max_dropout
        drop = rng.random(len(pts)) <= ratio
        if drop.any():
            pts[drop] = pts[0]
    if policy.scale_prob > 0 and rng.random() < policy.scale_prob:
        pts *= rng.uniform(*policy.scale_range)
    if policy.shift_prob > 0 and rng.random() < policy.shift_prob:
        pts += rng.uniform(-policy.shift_range, policy.shift_range, size=3)
    if policy.perturb_prob > 0 and rng.random() < policy.perturb_prob:
        angles = np.clip(policy.perturb_sigma * rng.standard_normal(3), -policy.perturb_clip, policy.perturb_clip)
        cx, cy, cz = np.cos(angles)
        sx, sy, sz = np.sin(angles)
        rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
        ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
        pts = pts @ (rz @ ry @ rx).T
    if policy.rotate_prob > 0 and rng.random() < policy.rotate_prob:
        pts = pts @ _rotation_z(rng.uniform(0, 2 * np.pi)).T
    return pts


def _resize_nearest(x, h, w):
    rows = (np.arange(h) * x.shape[0] / h).astype(int)
    cols = (np.arange(w) * x.shape[1] / w).astype(int)
    return x[rows][:, cols]


def augment_grid(x, policy, rng):
    out = np.asarray(x)
    h, w = out.shape[:2]
    if policy.crop_prob > 0 and rng.random() < policy.crop_prob:
        scale = rng.uniform(*policy.crop_scale)
        ch, cw = max(1, int(round(h * np.sqrt(scale)))), max(1, int(round(w * np.sqrt(scale))))
        top = int(rng.integers(0, h - ch + 1))
        left = int(rng.integers(0, w - cw + 1))
        out = _resize_nearest(out[top : top + ch, left : left + cw], h, w)
    if policy.hflip_prob > 0 and rng.random() < policy.hflip_prob:
        out = out[:, ::-1]
    if policy.vflip_prob > 0 and rng.random() < policy.vflip_prob:
        out = out[::-1]
    if policy.rot90_prob > 0 and rng.random() < policy.rot90_prob and h == w:
        out = np.rot90(out, int(rng.integers(0, 4)))
    return np.ascontiguousarray(out)


def augment_spectrogram(values, policy, rng):
    out = spec_mask(values, policy.freq_mask, 0, rng)
    return spec_mask(out, policy.time_mask, 1, rng)


def augment(sample, policy, rng):
    """Apply the per-sample part of ``policy``; audio mixup is batch-level, see :func:`mixup_batch`."""
    if policy.modality == "points":
        return augment_points(sample, policy, rng)
    if policy.modality == "audio":
        return augment_spectrogram(sample, policy, rng)
    if policy.modality in ("depth", "tactile"):
        return augment_grid(sample, policy, rng)
    if policy.modality == "eeg":
        return sample
    raise ConfigurationError(f"no augmentation policy for modality {policy.modality!r}")
