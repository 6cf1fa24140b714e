"""Fixed teacher encoders that define the target embedding space, and a feature store."""
from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from omnilens.backbone import BackboneConfig, Trunk, project_embedding, trunk_forward
from omnilens.errors import ConfigurationError, DataError, FormatError, InputError
from omnilens.numerics import tensor as T
from omnilens.numerics.module import Linear, Module, Parameter
from omnilens.tokenizers.grid import grid_patches

ANCHOR_KINDS = ("image", "text")

DEFAULT_TEMPLATES = (
    "a photo of a {}.",
    "a point cloud of a {}.",
    "a rendering of a {}.",
    "the sound of a {}.",
    "a {} texture.",
    "a picture of the {}.",
)


@dataclass
class AnchorSpec:
    anchors: list = field(default_factory=lambda: ["image", "text"])
    d_out: int = 32

    def validate(self):
        if not self.anchors:
            raise ConfigurationError("at least one anchor modality is required")
        for a in self.anchors:
            if a not in ANCHOR_KINDS:
                raise ConfigurationError(f"unknown anchor modality {a!r}")
        if len(set(self.anchors)) != len(self.anchors):
            raise ConfigurationError("anchor modalities must be distinct")
        return self


@dataclass
class ImageTeacherConfig:
    size: int = 16
    channels: int = 3
    patch: int = 4
    d: int = 32
    heads: int = 2
    blocks: int = 2


class ImageTeacher(Module):
    """Tiny frozen ViT: patch embedding, class token, two blocks, projection, normalization."""

    def __init__(self, cfg, d_out, seed):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        grid = cfg.size // cfg.patch
        self.patch_proj = Linear(cfg.patch * cfg.patch * cfg.channels, cfg.d, rng)
        self.trunk = Trunk(
            BackboneConfig(
                L=cfg.blocks, l_range=(1, cfg.blocks), d=cfg.d, heads=cfg.heads, d_out=d_out,
                pos_len=grid * grid + 1,
            ),
            rng,
        )
        self.assign_names("teacher.image.")
        self.set_frozen(True)

    def tokens(self, images):
        images = np.asarray(images, dtype=T.get_dtype())
        expected = (self.cfg.size, self.cfg.size, self.cfg.channels)
        if images.shape[-3:] != expected:
            raise ConfigurationError(f"teacher expects images of shape {expected}, got {images.shape[-3:]}")
        if images.ndim == 3:
            images = images[None]
        return self.patch_proj(T.Tensor(np.ascontiguousarray(grid_patches(images, self.cfg.patch))))

    def encode(self, images):
        """(B, H, W, C) or (H, W, C) -> unit-norm embeddings (B, d_out)."""
        with T.no_grad():
            _, pooled = trunk_forward(self.tokens(images), self.trunk)
            return project_embedding(pooled, self.trunk).data


def tokenize_text(text, vocab):
    """Lowercase, split on non-alphanumerics, map words to vocabulary ids."""
    words = re.findall(r"[a-z0-9]+", text.lower())
    index = vocab if isinstance(vocab, dict) else {w: i for i, w in enumerate(vocab)}
    try:
        return [index[w] for w in words]
    except KeyError as exc:
        raise InputError(f"word {exc.args[0]!r} is not in the vocabulary") from None


def build_vocab(class_names, templates=DEFAULT_TEMPLATES):
    words = set()
    for text in list(templates) + list(class_names):
        words.update(re.findall(r"[a-z0-9]+", text.lower()))
    return sorted(words)


class TextTeacher(Module):
    """Bag-of-embeddings text encoder: mean token embedding, linear map, normalization."""

    def __init__(self, vocab, d_out, seed, d=32):
        rng = np.random.default_rng(seed)
        self.vocab = list(vocab)
        self.index = {w: i for i, w in enumerate(self.vocab)}
        self.table = Parameter(rng.standard_normal((len(self.vocab), d)))
        self.proj = Linear(d, d_out, rng, bias=False)
        self.assign_names("teacher.text.")
        self.set_frozen(True)

    def encode_ids(self, token_ids):
        ids = np.asarray(token_ids, dtype=np.int64)
        if ids.size == 0:
            raise InputError("empty token sequence")
        if ids.min() < 0 or ids.max() >= len(self.vocab):
            raise InputError("token id outside the vocabulary")
        with T.no_grad():
            pooled = self.table.data[ids].mean(axis=0)
            out = pooled @ self.proj.weight.data
            return out / np.linalg.norm(out)

    def encode(self, text):
        return self.encode_ids(tokenize_text(text, self.index))


def class_template_embeddings(class_names, templates, teacher):
    """Per class: mean of the teacher embeddings over all filled templates, re-normalized."""
    if not class_names:
        raise InputError("no class names given")
    if not templates:
        raise InputError("at least one template is required")
    rows = []
    for name in class_names:
        embs = np.stack([teacher.encode(t.format(name)) for t in templates])
        mean = embs.mean(axis=0)
        rows.append(mean / np.linalg.norm(mean))
    return np.stack(rows)


STORE_MAGIC = b"OLFS"
STORE_VERSION = 1


class FeatureStore:
    """Per-sample-id rows of unit-norm anchor embeddings, one (d_out,) row per anchor."""

    def __init__(self, d_out, n_anchors):
        self.d_out = d_out
        self.n_anchors = n_anchors
        self.rows = {}

    def __len__(self):
        return len(self.rows)

    def __contains__(self, sample_id):
        return sample_id in self.rows

    def add(self, sample_id, embeddings):
        emb = np.asarray(embeddings, dtype=np.float32).reshape(self.n_anchors, self.d_out)
        norms = np.linalg.norm(emb.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise InputError(f"rows for {sample_id!r} are not unit-norm: {norms}")
        if sample_id in self.rows:
            raise InputError(f"duplicate sample id {sample_id!r}")
        self.rows[sample_id] = emb

    def get(self, sample_id):
        try:
            return self.rows[sample_id]
        except KeyError:
            raise DataError(f"no anchor features stored for sample {sample_id!r}") from None

    def write(self, path):
        parts = [STORE_MAGIC, struct.pack("<III", STORE_VERSION, self.d_out, self.n_anchors)]
        for sample_id, emb in self.rows.items():
            raw = sample_id.encode("utf-8")
            parts.append(struct.pack("<I", len(raw)))
            parts.append(raw)
            parts.append(np.ascontiguousarray(emb, dtype="<f4").tobytes())
        Path(path).write_bytes(b"".join(parts))

    @classmethod
    def read(cls, path):
        buf = Path(path).read_bytes()
        if buf[:4] != STORE_MAGIC:
            raise FormatError("bad feature-store magic", 0)
        if len(buf) < 16:
            raise FormatError("truncated feature-store header", len(buf))
        version, d_out, n_anchors = struct.unpack_from("<III", buf, 4)
        if version != STORE_VERSION:
            raise FormatError(f"unsupported feature-store version {version}", 4)
        store = cls(d_out, n_anchors)
        pos = 16
        row_bytes = 4 * d_out * n_anchors
        while pos < len(buf):
            if pos + 4 > len(buf):
                raise FormatError("truncated record header", pos)
            (n,) = struct.unpack_from("<I", buf, pos)
            if pos + 4 + n + row_bytes > len(buf):
                raise FormatError("truncated record", pos)
            try:
                sample_id = buf[pos + 4 : pos + 4 + n].decode("utf-8")
            except UnicodeDecodeError:
                raise FormatError("sample id is not utf-8", pos + 4) from None
            emb = np.frombuffer(buf, dtype="<f4", count=d_out * n_anchors, offset=pos + 4 + n)
            store.rows[sample_id] = emb.reshape(n_anchors, d_out).astype(np.float32)
            pos += 4 + n + row_bytes
        return store


def store_roundtrip(store, path):
    store.write(path)
    return FeatureStore.read(path)
