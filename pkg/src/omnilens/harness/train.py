"""Training and evaluation driver.

Randomness in the loop is drawn from per-step streams keyed by (seed, step),
so a run resumed from a checkpoint follows the same trajectory as an
uninterrupted one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from omnilens.alignment import contrastive_loss, effective_tau, training_step
from omnilens.anchors import FeatureStore, ImageTeacher, TextTeacher, class_template_embeddings
from omnilens.backbone import project_embedding, trunk_forward
from omnilens.errors import ConfigurationError
from omnilens.harness import metrics
from omnilens.harness.data import gen_anchor_image, gen_synthetic, load_dataset
from omnilens.harness.probe import ProbeConfig, linear_probe
from omnilens.model import ModalityEncoder
from omnilens.numerics import tensor as T
from omnilens.numerics.checkpoint import load_checkpoint, save_checkpoint
from omnilens.numerics.optim import AdamW, warmup_cosine
from omnilens.tokenizers.audio import log_mel_spectrogram
from omnilens.tokenizers.augment import AugmentPolicy, augment, mixup_batch
from omnilens.tokenizers.grid import GridEmbed, depth_to_disparity
from omnilens.tokenizers.points import group_points

CHECKPOINT = "checkpoint.olns"
METRICS_LOG = "metrics.jsonl"
# keys that may differ between a run and its resumption
RESUMABLE_KEYS = {("train", "steps"), ("train", "eval_every"), ("train", "checkpoint_every"), ("paths",)}


class Pipeline:
    """Raw payloads -> model inputs, with cached deterministic preprocessing for evaluation."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.tok = cfg.tokenizer
        self.modality = self.tok.modality
        self.policy = AugmentPolicy.default(self.modality) if cfg.train.augment else AugmentPolicy.disabled(self.modality)
        self._cache = {}

    def base(self, sample):
        """Deterministic per-sample representation before augmentation."""
        key = sample.id
        if key not in self._cache:
            self._cache[key] = self._base(sample.payload)
        return self._cache[key]

    def _base(self, payload):
        tok = self.tok
        if self.modality == "points":
            return np.asarray(payload, dtype=np.float64)
        if self.modality == "audio":
            spec = log_mel_spectrogram(payload, tok.sample_rate, n_mels=tok.n_mels).values
            return (spec - tok.spec_mean) / tok.spec_std
        if self.modality == "depth":
            return depth_to_disparity(payload)
        if self.modality == "tactile":
            return (np.asarray(payload) - 0.5) / 0.25
        return np.asarray(payload, dtype=np.float64)

    def _collate(self, items):
        if self.modality == "points":
            groups = [group_points(p, self.tok.g, self.tok.k) for p in items]
            return np.stack([g.centers for g in groups]), np.stack([g.groups for g in groups])
        return np.stack(items)

    def inputs(self, samples):
        return self._collate([self.base(s) for s in samples])

    def raw_inputs(self, payloads):
        return self._collate([self._base(p) for p in payloads])

    def train_inputs(self, samples, rng):
        return self._collate([augment(self.base(s), self.policy, rng) for s in samples])


@dataclass
class Teachers:
    image: ImageTeacher
    text: TextTeacher
    class_matrix: np.ndarray
    store: FeatureStore | None = None
    kinds: list = field(default_factory=list)

    def targets(self, samples):
        """One (B, d_out) array per anchor, in the configured anchor order."""
        if self.store is not None:
            rows = np.stack([self.store.get(s.id) for s in samples]).astype(T.get_dtype())
            return [rows[:, k] for k in range(len(self.kinds))]
        return [self.encode(kind, samples) for kind in self.kinds]

    def encode(self, kind, samples):
        if kind == "image":
            return self.image.encode(np.stack([s.image for s in samples])).astype(T.get_dtype())
        return np.stack([self.text.encode_ids(s.text_ids) for s in samples]).astype(T.get_dtype())


def build_teachers(cfg, ds):
    d_out = cfg.anchors.d_out
    image = ImageTeacher(cfg.image_teacher, d_out, cfg.teacher_seed)
    text = TextTeacher(ds.vocab, d_out, cfg.teacher_seed + 1)
    class_matrix = class_template_embeddings(ds.class_names, ds.templates, text)
    return Teachers(image=image, text=text, class_matrix=class_matrix, kinds=list(cfg.anchors.anchors))


def build_store(teachers, samples, batch=64):
    store = FeatureStore(teachers.class_matrix.shape[1], len(teachers.kinds))
    for i in range(0, len(samples), batch):
        chunk = samples[i : i + batch]
        rows = np.stack([teachers.encode(kind, chunk) for kind in teachers.kinds], axis=1)
        rows = rows / np.linalg.norm(rows.astype(np.float64), axis=-1, keepdims=True)
        for s, r in zip(chunk, rows):
            store.add(s.id, r)
    return store


def load_data(cfg):
    path = cfg.paths.get("data")
    if path and (Path(path) / "manifest.json").exists():
        ds = load_dataset(path)
        if ds.modality != cfg.tokenizer.modality:
            raise ConfigurationError(f"dataset at {path} holds {ds.modality} samples, config expects {cfg.tokenizer.modality}")
        return ds
    return gen_synthetic(cfg)


def embed_samples(encoder, pipeline, samples, batch=64):
    out = []
    with T.no_grad():
        for i in range(0, len(samples), batch):
            out.append(encoder.embed(pipeline.inputs(samples[i : i + batch])).data)
    return np.concatenate(out).astype(np.float64) if out else np.zeros((0, encoder.cfg.backbone.d_out))


def multi_clip_aggregate(signal, window, stride, embed_fn):
    """Mean of unit-norm clip embeddings along the last axis of ``signal``, re-normalized.

    A signal shorter than one window is zero-padded to a single clip.
    """
    signal = np.asarray(signal)
    n = signal.shape[-1]
    if n <= window:
        pad = [(0, 0)] * (signal.ndim - 1) + [(0, window - n)]
        clips = [np.pad(signal, pad)]
    else:
        starts = list(range(0, n - window + 1, stride))
        clips = [signal[..., s : s + window] for s in starts]
    emb = np.asarray(embed_fn(np.stack(clips)), dtype=np.float64)
    if len(clips) == 1:
        return emb[0]
    mean = emb.mean(axis=0)
    return mean / np.linalg.norm(mean)


def evaluate(encoder, pipeline, ds, teachers, cfg, split="test"):
    """Zero-shot top-K, image recall@K, mAP over classes and a few-shot linear probe."""
    test = ds.split(split)
    emb = embed_samples(encoder, pipeline, test)
    labels = np.array([s.label for s in test])
    report = {}
    scores = emb @ teachers.class_matrix.T
    names = list(ds.class_names)
    eval_labels = labels
    if cfg.eval.class_merge:
        scores, merged = metrics.merge_class_scores(scores, names, cfg.eval.class_merge)
        remap = {}
        for i, n in enumerate(names):
            owner = next((m for m, group in cfg.eval.class_merge.items() if n in group), n)
            remap[i] = merged.index(owner)
        eval_labels = np.array([remap[l] for l in labels])
    for k in cfg.eval.top_k:
        if k <= scores.shape[1]:
            report[f"zero_shot_top{k}"] = metrics.topk_accuracy(scores, eval_labels, k)
    gallery = teachers.encode("image", test).astype(np.float64)
    truth = [np.flatnonzero(labels == l) for l in labels]
    for k in cfg.eval.recall_k:
        report[f"image_recall@{k}"] = metrics.retrieval_recall(emb, gallery, truth, k)
    report["map"] = metrics.mean_average_precision(scores, metrics.one_hot(eval_labels, scores.shape[1]))
    train = ds.split("train")
    if cfg.eval.probe_shots > 0 and train:
        train_emb = embed_samples(encoder, pipeline, train)
        probe_cfg = ProbeConfig(cfg.eval.probe_lr, cfg.eval.probe_iters, cfg.eval.probe_l2, cfg.eval.probe_tol)
        report["probe_acc"] = linear_probe(
            train_emb, [s.label for s in train], emb, labels, cfg.eval.probe_shots, probe_cfg,
            seed=cfg.seed, n_classes=ds.n_classes,
        )
    return report


def pretrain_trunk(cfg, trunk, teachers):
    """Brief contrastive pre-training of the trunk on the anchor-image task; leaves frozen flags as found."""
    ic = cfg.image_teacher
    rng = np.random.default_rng([cfg.trunk_seed, 99])
    embed = GridEmbed(cfg.backbone.d, ic.size, ic.size, ic.channels, ic.patch, rng)
    embed.assign_names("pretrain.embed.")
    flags = [(p, p.frozen) for p in trunk.parameters()]
    for p, _ in flags:
        p.frozen = False
    params = trunk.trainable_parameters() + embed.trainable_parameters()
    opt = AdamW(params, lr=cfg.train.lr, betas=cfg.train.betas, weight_decay=cfg.train.weight_decay)
    n_classes = max(cfg.data.n_classes, 2)
    b = cfg.train.batch_size
    for step in range(cfg.trunk_pretrain_steps):
        srng = np.random.default_rng([cfg.trunk_seed, 100, step])
        labels = srng.integers(0, n_classes, b)
        images = np.stack([gen_anchor_image(int(l), n_classes, ic.size, srng) for l in labels])
        target = teachers.image.encode(images).astype(T.get_dtype())
        _, pooled = trunk_forward(embed(images), trunk)
        loss = contrastive_loss(project_embedding(pooled, trunk), [target], cfg.train.tau_init)
        loss.backward()
        opt.step(warmup_cosine(step, cfg.train.lr, min(10, cfg.trunk_pretrain_steps), cfg.trunk_pretrain_steps))
        opt.zero_grad()
        embed.zero_grad()
        trunk.zero_grad()
    for p, frozen in flags:
        p.frozen = frozen
    return trunk


def build_encoder(cfg, teachers=None):
    encoder = ModalityEncoder(cfg)
    if cfg.trunk_init == "image_pretrain":
        if teachers is None:
            raise ConfigurationError("trunk pre-training needs the image teacher")
        pretrain_trunk(cfg, encoder.trunk, teachers)
    return encoder


def _config_diff(a, b, prefix=()):
    diffs = []
    for key in sorted(set(a) | set(b)):
        path = prefix + (key,)
        if path in RESUMABLE_KEYS:
            continue
        va, vb = a.get(key), b.get(key)
        if isinstance(va, dict) and isinstance(vb, dict):
            diffs.extend(_config_diff(va, vb, path))
        elif va != vb:
            diffs.append(".".join(path))
    return diffs


@dataclass
class TrainResult:
    encoder: ModalityEncoder
    records: list
    report: dict
    out_dir: Path | None
    dataset: object = None
    teachers: Teachers | None = None


def _write_record(fh, records, record):
    records.append(record)
    if fh is not None:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def run_train(cfg, out_dir=None, dataset=None, resume=False, evaluate_at_end=True, encoder=None, teachers=None):
    """Train the encoder against frozen teachers; writes config, metrics log and checkpoints to ``out_dir``.

    A prebuilt ``encoder`` or ``teachers`` may be passed in, e.g. to snapshot weights before training.
    """
    cfg.validate()
    T.set_precision(cfg.precision)
    ds = dataset if dataset is not None else load_data(cfg)
    teachers = teachers if teachers is not None else build_teachers(cfg, ds)
    train = ds.split("train")
    if not train and cfg.train.steps > 0:
        raise ConfigurationError("the dataset has no training samples")
    if cfg.train.anchor_source == "store":
        store_path = cfg.paths.get("anchor_store")
        teachers.store = FeatureStore.read(store_path) if store_path and Path(store_path).exists() else build_store(teachers, ds.samples)
    encoder = encoder if encoder is not None else build_encoder(cfg, teachers)
    pipeline = Pipeline(cfg)
    opt = AdamW(
        encoder.trainable_parameters(), lr=cfg.train.lr, betas=tuple(cfg.train.betas),
        weight_decay=cfg.train.weight_decay,
    )
    start = 0
    records = []
    fh = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg_path = out_dir / "config.json"
        if resume and (out_dir / CHECKPOINT).exists():
            old = json.loads(cfg_path.read_text())
            diffs = _config_diff(old, json.loads(cfg.to_json()))
            if diffs:
                raise ConfigurationError(f"cannot resume: config differs in {diffs}")
            state = load_checkpoint(out_dir / CHECKPOINT)
            encoder.load_state_dict({k: v for k, v in state.items() if not k.startswith("optim.")})
            opt.load_state_dict(state)
            start = opt.step_count
            log_path = out_dir / METRICS_LOG
            kept = [json.loads(line) for line in log_path.read_text().splitlines()] if log_path.exists() else []
            records = [r for r in kept if r["event"] != "final" and r["step"] <= start]
            log_path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))
            fh = open(log_path, "a")
        else:
            cfg.save(cfg_path)
            fh = open(out_dir / METRICS_LOG, "w")
    try:
        _train_loop(cfg, encoder, opt, pipeline, ds, teachers, train, start, records, fh, out_dir)
        report = {}
        if evaluate_at_end and ds.split("test"):
            report = evaluate(encoder, pipeline, ds, teachers, cfg)
            _write_record(fh, records, {"event": "final", "step": cfg.train.steps, **report})
    finally:
        if fh is not None:
            fh.close()
    if out_dir is not None:
        save_checkpoint(out_dir / CHECKPOINT, {**encoder.state_dict(), **opt.state_dict()})
    return TrainResult(encoder, records, report, out_dir, ds, teachers)


def _train_loop(cfg, encoder, opt, pipeline, ds, teachers, train, start, records, fh, out_dir):
    tc = cfg.train
    pool = [s for s in train for _ in range(max(1, tc.sample_replication))]
    per_epoch = max(1, len(pool) // tc.batch_size)
    use_mixup = pipeline.modality == "audio" and tc.augment
    for step in range(start, tc.steps):
        epoch, offset = divmod(step, per_epoch)
        order = np.random.default_rng([cfg.seed, 7, epoch]).permutation(len(pool))
        idx = order[offset * tc.batch_size : (offset + 1) * tc.batch_size]
        batch = [pool[i] for i in idx]
        rng = np.random.default_rng([cfg.seed, 8, step])
        inputs = pipeline.train_inputs(batch, rng)
        targets = teachers.targets(batch)
        if use_mixup:
            inputs, targets = mixup_batch(inputs, targets, pipeline.policy, rng)
            targets = [t.astype(T.get_dtype()) for t in targets]
        lr = warmup_cosine(step, tc.lr, tc.warmup_steps, tc.steps)
        loss = training_step(encoder, inputs, targets, opt, lr)
        done = step + 1
        if tc.log_every and (done % tc.log_every == 0 or done == tc.steps):
            tau = float(effective_tau(encoder.temperature).data)
            _write_record(fh, records, {"event": "train", "step": done, "loss": loss, "lr": lr, "tau": tau})
        if tc.eval_every and done % tc.eval_every == 0 and done < tc.steps and ds.split("test"):
            _write_record(fh, records, {"event": "eval", "step": done, **evaluate(encoder, pipeline, ds, teachers, cfg)})
        if out_dir is not None and tc.checkpoint_every and done % tc.checkpoint_every == 0:
            save_checkpoint(out_dir / CHECKPOINT, {**encoder.state_dict(), **opt.state_dict()})
            _write_record(fh, records, {"event": "checkpoint", "step": done})
            if fh is not None:
                fh.flush()


def load_encoder(cfg, checkpoint, dataset=None):
    """Rebuild an encoder from config and load trained weights."""
    T.set_precision(cfg.precision)
    encoder = ModalityEncoder(cfg)
    state = load_checkpoint(checkpoint)
    encoder.load_state_dict({k: v for k, v in state.items() if not k.startswith("optim.")})
    return encoder


def run_eval(cfg, checkpoint, dataset=None, split="test"):
    """Metrics report for a trained checkpoint."""
    cfg.validate()
    T.set_precision(cfg.precision)
    ds = dataset if dataset is not None else load_data(cfg)
    teachers = build_teachers(cfg, ds)
    encoder = load_encoder(cfg, checkpoint)
    return evaluate(encoder, Pipeline(cfg), ds, teachers, cfg, split)
