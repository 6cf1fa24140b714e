"""Run configuration: nested dataclasses with a stable JSON form."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from omnilens.anchors import DEFAULT_TEMPLATES, AnchorSpec, ImageTeacherConfig
from omnilens.backbone import BackboneConfig
from omnilens.errors import ConfigurationError
from omnilens.lens import ITER_CS_ATTN, S_ATTN, LensConfig
from omnilens.tokenizers.audio import frame_count, patch_grid_shape

MODALITIES = ("points", "audio", "depth", "tactile", "eeg")


@dataclass
class TokenizerConfig:
    modality: str = "points"
    # points
    n_points: int = 256
    g: int = 32
    k: int = 16
    pointnet_widths: tuple = (32, 64)
    # audio
    sample_rate: int = 16000
    clip_seconds: float = 1.0
    n_mels: int = 128
    patch: int = 16
    stride: int = 10
    spec_mean: float = 0.0
    spec_std: float = 1.0
    # depth / tactile
    height: int = 32
    width: int = 32
    channels: int = 1
    # eeg
    eeg_channels: int = 16
    eeg_steps: int = 64
    t_group: int = 1

    def num_tokens(self):
        if self.modality == "points":
            return self.g
        if self.modality == "audio":
            nf, nt = patch_grid_shape(self.n_mels, self.frames(), self.patch, self.stride)
            return nf * nt
        if self.modality in ("depth", "tactile"):
            return (self.height // self.patch) * (self.width // self.patch)
        if self.modality == "eeg":
            return self.eeg_steps // self.t_group
        raise ConfigurationError(f"unknown modality {self.modality!r}")

    def frames(self):
        return frame_count(int(round(self.sample_rate * self.clip_seconds)), self.sample_rate)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    steps: int = 600
    batch_size: int = 16
    warmup_steps: int = 50
    weight_decay: float = 0.2
    betas: tuple = (0.9, 0.98)
    eval_every: int = 0
    log_every: int = 10
    checkpoint_every: int = 0
    augment: bool = True
    sample_replication: int = 1
    anchor_source: str = "live"  # "live" teachers or a precomputed "store"
    tau_init: float = 0.07
    tau_min: float = 0.01
    tau_max: float = 1.0


@dataclass
class EvalConfig:
    top_k: tuple = (1, 3)
    recall_k: tuple = (1, 5)
    templates: tuple = DEFAULT_TEMPLATES
    class_merge: dict = field(default_factory=dict)  # merged label -> member class names
    probe_shots: int = 8
    probe_lr: float = 0.5
    probe_iters: int = 500
    probe_l2: float = 1e-3
    probe_tol: float = 1e-6
    clip_window: float = 0.0  # seconds; 0 means one clip per sample


@dataclass
class DataConfig:
    n_classes: int = 5
    train_per_class: int = 50
    val_per_class: int = 0
    test_per_class: int = 20
    noise: float = 0.02
    anchor_image_size: int = 16


@dataclass
class RunConfig:
    seed: int = 0
    precision: str = "f32"
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    lens: LensConfig | None = field(default_factory=LensConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    anchors: AnchorSpec = field(default_factory=AnchorSpec)
    image_teacher: ImageTeacherConfig = field(default_factory=ImageTeacherConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    data: DataConfig = field(default_factory=DataConfig)
    trunk_seed: int = 1234
    trunk_init: str = "seeded"  # or "image_pretrain": brief pre-training on the anchor-image task
    trunk_pretrain_steps: int = 100
    teacher_seed: int = 4321
    paths: dict = field(default_factory=dict)

    def validate(self):
        """Cross-module width and shape checks, run before any compute."""
        tok = self.tokenizer
        if tok.modality not in MODALITIES:
            raise ConfigurationError(f"unknown modality {tok.modality!r}")
        if self.precision not in ("f32", "f64"):
            raise ConfigurationError(f"unknown precision {self.precision!r}")
        self.backbone.validate()
        self.anchors.validate()
        if self.backbone.d_out != self.anchors.d_out:
            raise ConfigurationError(
                f"trunk projects to {self.backbone.d_out} dims but anchors live in {self.anchors.d_out}"
            )
        if self.lens is not None:
            self.lens.validate()
            if self.lens.d != self.backbone.d:
                raise ConfigurationError(f"lens width {self.lens.d} != trunk width {self.backbone.d}")
            if self.lens.init_from_backbone is not None:
                start, end = self.lens.init_from_backbone
                if not (1 <= start <= end <= self.backbone.L):
                    raise ConfigurationError(f"lens init range {self.lens.init_from_backbone} outside trunk")
        if tok.modality in ("depth", "tactile") and (tok.height % tok.patch or tok.width % tok.patch):
            raise ConfigurationError("grid size must be divisible by the patch size")
        if tok.modality == "eeg" and tok.eeg_steps % tok.t_group:
            raise ConfigurationError("EEG length must be divisible by t_group")
        tok.num_tokens()
        if self.image_teacher.size != self.data.anchor_image_size:
            raise ConfigurationError("anchor image size must match the image teacher input")
        if self.train.anchor_source not in ("live", "store"):
            raise ConfigurationError(f"unknown anchor source {self.train.anchor_source!r}")
        if self.trunk_init not in ("seeded", "image_pretrain"):
            raise ConfigurationError(f"unknown trunk init {self.trunk_init!r}")
        if self.train.batch_size < 1:
            raise ConfigurationError("batch size must be positive")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True)

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def from_dict(cls, raw):
        return _build(cls, raw)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _build(cls, raw):
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"expected an object for {cls.__name__}, got {type(raw).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(fields)
    if unknown:
        raise ConfigurationError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in raw.items():
        nested = _NESTED.get((cls, name))
        if nested is not None:
            kwargs[name] = _build(nested, value)
        elif isinstance(value, list):
            kwargs[name] = list(value) if name == "anchors" else tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


_NESTED = {
    (RunConfig, "tokenizer"): TokenizerConfig,
    (RunConfig, "lens"): LensConfig,
    (RunConfig, "backbone"): BackboneConfig,
    (RunConfig, "anchors"): AnchorSpec,
    (RunConfig, "image_teacher"): ImageTeacherConfig,
    (RunConfig, "train"): TrainConfig,
    (RunConfig, "eval"): EvalConfig,
    (RunConfig, "data"): DataConfig,
}


def desk_config(modality="points", **overrides):
    """Laptop-scale defaults per modality, mirroring the per-modality lens layouts at reduced size."""
    cfg = RunConfig()
    cfg.tokenizer = TokenizerConfig(modality=modality)
    cfg.backbone = BackboneConfig()
    if modality == "points":
        cfg.lens = LensConfig(variant=ITER_CS_ATTN, depth=4, self_layers=1, tie_weights=True)
    elif modality == "audio":
        cfg.lens = LensConfig(variant=ITER_CS_ATTN, depth=2, self_layers=3)
        # log-mel statistics of the synthetic audio generator
        cfg.tokenizer.spec_mean = -2.0
        cfg.tokenizer.spec_std = 3.0
    elif modality == "eeg":
        cfg.tokenizer.t_group = 8
        cfg.train.lr = 3e-3
        cfg.lens = LensConfig(variant=ITER_CS_ATTN, depth=1, self_layers=1)
    elif modality in ("depth", "tactile"):
        cfg.tokenizer.patch = 8
        cfg.tokenizer.channels = 1 if modality == "depth" else 3
        cfg.lens = LensConfig(variant=S_ATTN, depth=2, init_from_backbone=(1, 2))
        cfg.backbone.l_range = (3, 4)
        cfg.backbone.grid = (4, 4)
    else:
        raise ConfigurationError(f"unknown modality {modality!r}")
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


def micro_config(modality="points"):
    """A few thousand trainable parameters per modality, for finite-difference gradient checks."""
    cfg = RunConfig(precision="f64")
    cfg.tokenizer = TokenizerConfig(
        modality=modality, n_points=24, g=4, k=4, pointnet_widths=(4,), clip_seconds=0.2, n_mels=16,
        patch=8, stride=8, height=8, width=8, channels=1, eeg_channels=4, eeg_steps=8, t_group=2,
    )
    cfg.backbone = BackboneConfig(L=2, l_range=(1, 2), d=8, heads=2, d_out=8, pos_len=5, mlp_ratio=2)
    cfg.anchors = AnchorSpec(anchors=["image", "text"], d_out=8)
    lens = dict(d=8, heads=2, mlp_ratio=2, n_latents=4)
    if modality == "points":
        cfg.lens = LensConfig(variant=ITER_CS_ATTN, depth=3, self_layers=1, tie_weights=True, **lens)
    elif modality in ("audio", "eeg"):
        cfg.lens = LensConfig(variant=ITER_CS_ATTN, depth=1, self_layers=1, **lens)
    elif modality in ("depth", "tactile"):
        cfg.tokenizer.patch = 4
        cfg.tokenizer.channels = 1 if modality == "depth" else 3
        cfg.lens = LensConfig(variant=S_ATTN, depth=1, init_from_backbone=(1, 1), **lens)
        cfg.backbone.l_range = (2, 2)
    else:
        raise ConfigurationError(f"unknown modality {modality!r}")
    return cfg
