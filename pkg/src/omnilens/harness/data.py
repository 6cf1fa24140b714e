"""Seeded synthetic datasets: class-conditioned signals paired with anchor images and captions.

Every payload is quantized to its on-disk precision at generation time, so a
dataset written with :func:`save_dataset` reads back bit-identical.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from omnilens.anchors import build_vocab, tokenize_text
from omnilens.errors import ConfigurationError
from omnilens.tokenizers import io

CLASS_NAMES = {
    "points": ("sphere", "cube", "cylinder", "torus", "cone"),
    "audio": ("bell", "horn", "flute", "organ", "whistle"),
    "depth": ("ramp", "wall", "bowl", "ridge", "saddle"),
    "tactile": ("stripes", "rings", "checker", "dots", "grain"),
    "eeg": ("theta", "alpha", "beta", "gamma", "spindle"),
}
SPLITS = ("train", "val", "test")
EEG_RATE = 128.0


@dataclass
class Sample:
    id: str
    label: int
    split: str
    payload: np.ndarray
    image: np.ndarray
    text: str
    text_ids: list


@dataclass
class SyntheticDataset:
    modality: str
    class_names: list
    templates: list
    vocab: list
    samples: list = field(default_factory=list)

    @property
    def n_classes(self):
        return len(self.class_names)

    def split(self, name):
        return [s for s in self.samples if s.split == name]

    def by_id(self):
        return {s.id: s for s in self.samples}


def class_names_for(modality, n_classes):
    base = CLASS_NAMES[modality]
    names = []
    for c in range(n_classes):
        family, variant = c % len(base), c // len(base)
        names.append(base[family] if variant == 0 else f"{base[family]}{variant + 1}")
    return names


def _rotation_z(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def gen_points(family, variant, n, noise, rng):
    """Surface samples of a unit-scale parametric solid, randomly scaled and spun about z."""
    aspect = 1.0 + 0.35 * variant
    if family == 0:  # sphere
        v = rng.standard_normal((n, 3))
        pts = v / np.linalg.norm(v, axis=1, keepdims=True)
    elif family == 1:  # cube
        pts = rng.uniform(-1.0, 1.0, (n, 3))
        axis = rng.integers(0, 3, n)
        pts[np.arange(n), axis] = rng.choice([-1.0, 1.0], n)
    elif family == 2:  # cylinder, side vs caps in proportion to area
        r = 0.7
        theta = rng.uniform(0, 2 * np.pi, n)
        side = rng.random(n) < (2 * r * 2) / (2 * r * 2 + 2 * r * r)
        rad = np.where(side, r, r * np.sqrt(rng.random(n)))
        z = np.where(side, rng.uniform(-1, 1, n), rng.choice([-1.0, 1.0], n))
        pts = np.stack([rad * np.cos(theta), rad * np.sin(theta), z], axis=1)
    elif family == 3:  # torus
        big, small = 0.7, 0.3
        u, v = rng.uniform(0, 2 * np.pi, (2, n))
        pts = np.stack(
            [(big + small * np.cos(v)) * np.cos(u), (big + small * np.cos(v)) * np.sin(u), small * np.sin(v)],
            axis=1,
        )
    else:  # cone, apex up
        theta = rng.uniform(0, 2 * np.pi, n)
        base = rng.random(n) < 0.3
        t = np.sqrt(rng.random(n))
        rad = 0.8 * t
        z = np.where(base, -1.0, 1.0 - 2.0 * t)
        pts = np.stack([rad * np.cos(theta), rad * np.sin(theta), z], axis=1)
    pts[:, 2] *= aspect
    pts = pts @ _rotation_z(rng.uniform(0, 2 * np.pi)).T
    pts *= rng.uniform(0.8, 1.2)
    pts += noise * rng.standard_normal(pts.shape)
    return pts.astype(np.float32).astype(np.float64)


def gen_audio(family, variant, sample_rate, seconds, noise, rng):
    """Harmonic stack with a class-specific fundamental, partial count and decay."""
    f0 = (220.0, 330.0, 495.0, 740.0, 1110.0)[family] * 1.12**variant
    f0 *= rng.uniform(0.97, 1.03)
    n_harm = 2 + family
    decay = 0.45 + 0.1 * family
    n = int(round(sample_rate * seconds))
    t = np.arange(n) / sample_rate
    x = np.zeros(n)
    for h in range(1, n_harm + 1):
        f = f0 * h
        if f >= sample_rate / 2:
            break
        x += decay ** (h - 1) * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    envelope = 1.0 - 0.5 * np.exp(-t * rng.uniform(2.0, 6.0))
    x *= envelope * rng.uniform(0.25, 0.45) / np.max(np.abs(x))
    x += noise * rng.standard_normal(n)
    x = np.clip(x, -1.0, 1.0)
    # + 0.0 turns -0.0 into 0.0, which is what a 16-bit PCM round trip returns
    return np.round(x * 32767.0) / 32767.0 + 0.0


def _unit_grid(h, w):
    y, x = np.meshgrid(np.linspace(-1, 1, h), np.linspace(-1, 1, w), indexing="ij")
    return x, y


def gen_depth(family, variant, h, w, noise, rng):
    """Metric depth (H, W, 1) from a tilted plane or a quadric surface."""
    x, y = _unit_grid(h, w)
    a = rng.uniform(0.5, 1.0) * (1.0 + 0.3 * variant)
    if family == 0:
        z = a * x
    elif family == 1:
        z = a * y
    elif family == 2:
        z = a * (x * x + y * y)
    elif family == 3:
        z = -a * np.abs(x)
    else:
        z = a * (x * x - y * y)
    depth = rng.uniform(2.0, 3.0) + z
    depth *= 1.0 + noise * rng.standard_normal(depth.shape)
    return np.maximum(depth, 0.1)[..., None].astype(np.float32).astype(np.float64)


def gen_tactile(family, variant, h, w, noise, rng):
    """Rotation-stable procedural texture (H, W, 3) in [0, 1]."""
    x, y = _unit_grid(h, w)
    f = rng.uniform(2.5, 3.5) * (1.0 + 0.3 * variant)
    phase = rng.uniform(0, 2 * np.pi)
    if family == 0:
        coord = x if rng.random() < 0.5 else y
        v = np.sin(np.pi * f * coord + phase)
    elif family == 1:
        v = np.sin(np.pi * f * np.hypot(x, y) + phase)
    elif family == 2:
        v = np.sign(np.sin(np.pi * f * x + phase) * np.sin(np.pi * f * y + phase))
    elif family == 3:
        v = (np.cos(np.pi * f * x + phase) * np.cos(np.pi * f * y + phase) > 0.5) * 2.0 - 1.0
    else:
        v = rng.standard_normal((h, w))
        v = (v + np.roll(v, 1, 0) + np.roll(v, 1, 1)) / 1.5
    tint = rng.uniform(0.7, 1.0, 3)
    img = 0.5 + 0.35 * v[..., None] * tint
    img += 2 * noise * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32).astype(np.float64)


def gen_eeg(family, variant, channels, steps, noise, rng):
    """(C, T) oscillation in a class-specific band with per-channel gain and phase."""
    freq = (6.0, 10.0, 16.0, 24.0, 36.0)[family] * (1.0 + 0.2 * variant)
    freq *= rng.uniform(0.95, 1.05)
    t = np.arange(steps) / EEG_RATE
    gain = rng.uniform(0.5, 1.5, (channels, 1))
    phase = rng.uniform(0, 2 * np.pi, (channels, 1))
    x = gain * np.sin(2 * np.pi * freq * t[None] + phase)
    x += 15 * noise * rng.standard_normal(x.shape)
    return x.astype(np.float32).astype(np.float64)


def gen_anchor_image(label, n_classes, size, rng):
    """Class hue and stripe orientation; sample-level phase, contrast and pixel noise."""
    hue = label / n_classes
    color = 0.5 + 0.5 * np.cos(2 * np.pi * (hue + np.array([0.0, 1 / 3, 2 / 3])))
    angle = np.pi * label / n_classes
    x, y = _unit_grid(size, size)
    coord = np.cos(angle) * x + np.sin(angle) * y
    wave = np.sin(np.pi * (2 + label % 3) * coord + rng.uniform(0, 2 * np.pi))
    img = 0.2 + 0.6 * color * (0.6 + 0.4 * rng.uniform(0.8, 1.2) * wave[..., None])
    img += 0.03 * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32).astype(np.float64)


def _payload(cfg, label, rng):
    tok, data = cfg.tokenizer, cfg.data
    names = CLASS_NAMES[tok.modality]
    family, variant = label % len(names), label // len(names)
    if tok.modality == "points":
        return gen_points(family, variant, tok.n_points, data.noise, rng)
    if tok.modality == "audio":
        return gen_audio(family, variant, tok.sample_rate, tok.clip_seconds, data.noise, rng)
    if tok.modality == "depth":
        return gen_depth(family, variant, tok.height, tok.width, data.noise, rng)
    if tok.modality == "tactile":
        return gen_tactile(family, variant, tok.height, tok.width, data.noise, rng)
    return gen_eeg(family, variant, tok.eeg_channels, tok.eeg_steps, data.noise, rng)


def gen_synthetic(cfg, seed=None):
    """Class-balanced train/val/test splits; a pure function of (cfg.data, cfg.tokenizer, seed)."""
    seed = cfg.seed if seed is None else seed
    modality = cfg.tokenizer.modality
    if modality not in CLASS_NAMES:
        raise ConfigurationError(f"unknown modality {modality!r}")
    n_classes = cfg.data.n_classes
    if n_classes < 2:
        raise ConfigurationError("at least two classes are required")
    names = class_names_for(modality, n_classes)
    templates = list(cfg.eval.templates)
    vocab = build_vocab(names, templates)
    ds = SyntheticDataset(modality=modality, class_names=names, templates=templates, vocab=vocab)
    counts = {"train": cfg.data.train_per_class, "val": cfg.data.val_per_class, "test": cfg.data.test_per_class}
    for split_index, split in enumerate(SPLITS):
        for label in range(n_classes):
            for j in range(counts[split]):
                # one stream per sample so splits and classes can grow independently
                rng = np.random.default_rng([seed, split_index, label, j])
                payload = _payload(cfg, label, rng)
                image = gen_anchor_image(label, n_classes, cfg.data.anchor_image_size, rng)
                text = templates[int(rng.integers(len(templates)))].format(names[label])
                ds.samples.append(
                    Sample(
                        id=f"{modality}-{split}-{label:02d}-{j:04d}",
                        label=label,
                        split=split,
                        payload=payload,
                        image=image,
                        text=text,
                        text_ids=tokenize_text(text, vocab),
                    )
                )
    return ds


def radius_variance(points):
    """Variance of distances to the centroid relative to their squared mean; near zero for a sphere."""
    pts = np.asarray(points)
    r = np.linalg.norm(pts - pts.mean(axis=0), axis=1)
    return float(r.var() / r.mean() ** 2)


def _write_payload(path, modality, payload, sample_rate):
    if modality == "points":
        io.write_point_cloud(path, payload)
    elif modality == "audio":
        io.write_wav(path, payload, sample_rate)
    else:
        io.write_grid(path, payload, modality)


def _read_payload(path, modality, sample_rate):
    if modality == "points":
        return io.read_point_cloud(path)
    if modality == "audio":
        return io.read_wav(path, sample_rate)
    return io.read_grid(path)[0]


_SUFFIX = {"points": ".olpc", "audio": ".wav"}


def save_dataset(ds, root, sample_rate=16000):
    """Write payloads in their native formats plus ``manifest.json``."""
    root = Path(root)
    (root / "payload").mkdir(parents=True, exist_ok=True)
    (root / "image").mkdir(parents=True, exist_ok=True)
    entries = []
    for s in ds.samples:
        payload_file = f"payload/{s.id}{_SUFFIX.get(ds.modality, '.f32')}"
        image_file = f"image/{s.id}.f32"
        _write_payload(root / payload_file, ds.modality, s.payload, sample_rate)
        io.write_grid(root / image_file, s.image, "image")
        entries.append(
            {"id": s.id, "label": s.label, "split": s.split, "text": s.text, "text_ids": s.text_ids,
             "payload": payload_file, "image": image_file}
        )
    manifest = {
        "modality": ds.modality, "class_names": ds.class_names, "templates": ds.templates,
        "vocab": ds.vocab, "sample_rate": sample_rate, "samples": entries,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return root


def load_dataset(root):
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    modality = manifest["modality"]
    ds = SyntheticDataset(
        modality=modality, class_names=manifest["class_names"], templates=manifest["templates"],
        vocab=manifest["vocab"],
    )
    for e in manifest["samples"]:
        payload = _read_payload(root / e["payload"], modality, manifest["sample_rate"])
        ds.samples.append(
            Sample(
                id=e["id"], label=e["label"], split=e["split"], payload=payload,
                image=io.read_grid(root / e["image"])[0], text=e["text"], text_ids=list(e["text_ids"]),
            )
        )
    return ds
