"""Modality encoder: ModEmbed -> Lens -> frozen trunk -> projection -> unit-norm embedding."""
from __future__ import annotations

import numpy as np

from omnilens.alignment import Temperature
from omnilens.backbone import build_trunk, project_embedding, trunk_forward
from omnilens.errors import ConfigurationError
from omnilens.lens import build_lens, init_from_backbone
from omnilens.numerics.module import Module
from omnilens.tokenizers.audio import AudioEmbed
from omnilens.tokenizers.eeg import EEGEmbed
from omnilens.tokenizers.grid import GridEmbed
from omnilens.tokenizers.points import PointEmbed


def build_modembed(tok, d, rng):
    if tok.modality == "points":
        return PointEmbed(d, tok.g, tok.k, rng, tuple(tok.pointnet_widths))
    if tok.modality == "audio":
        return AudioEmbed(d, tok.n_mels, tok.frames(), tok.patch, tok.stride, rng, tok.spec_mean, tok.spec_std)
    if tok.modality in ("depth", "tactile"):
        return GridEmbed(d, tok.height, tok.width, tok.channels, tok.patch, rng)
    if tok.modality == "eeg":
        return EEGEmbed(d, tok.eeg_channels, tok.eeg_steps, tok.t_group, rng)
    raise ConfigurationError(f"unknown modality {tok.modality!r}")


class ModalityEncoder(Module):
    def __init__(self, cfg, seed=None):
        cfg.validate()
        self.cfg = cfg
        seed = cfg.seed if seed is None else seed
        rng = np.random.default_rng([seed, 1])
        self.modembed = build_modembed(cfg.tokenizer, cfg.backbone.d, rng)
        self.lens = build_lens(cfg.lens, rng) if cfg.lens is not None else None
        self.trunk = build_trunk(cfg.backbone, cfg.trunk_seed)
        if cfg.lens is not None and cfg.lens.init_from_backbone is not None:
            init_from_backbone(self.lens, self.trunk, cfg.lens.init_from_backbone)
        t = cfg.train
        self.temperature = Temperature(t.tau_init, t.tau_min, t.tau_max)
        self.assign_names()

    def tokens(self, inputs):
        if self.cfg.tokenizer.modality == "points":
            centers, groups = inputs
            return self.modembed(centers, groups)
        return self.modembed(inputs)

    def features(self, inputs):
        x = self.tokens(inputs)
        if self.lens is not None:
            x = self.lens(x)
        _, pooled = trunk_forward(x, self.trunk)
        return pooled

    def embed(self, inputs):
        return project_embedding(self.features(inputs), self.trunk)
