import numpy as np
import pytest

from omnilens.errors import ConfigurationError
from omnilens.harness.config import MODALITIES, desk_config
from omnilens.harness.data import (
    class_names_for, gen_points, gen_synthetic, load_dataset, radius_variance, save_dataset,
)


def tiny(modality, per_class=2, **data):
    cfg = desk_config(modality)
    cfg.data.train_per_class = per_class
    cfg.data.val_per_class = 1
    cfg.data.test_per_class = 1
    cfg.tokenizer.n_points = 64
    cfg.tokenizer.clip_seconds = 0.1
    for k, v in data.items():
        setattr(cfg.data, k, v)
    return cfg


def _same(a, b):
    return all(
        x.id == y.id and x.label == y.label and x.text_ids == y.text_ids
        and x.payload.tobytes() == y.payload.tobytes() and x.image.tobytes() == y.image.tobytes()
        for x, y in zip(a.samples, b.samples)
    ) and len(a.samples) == len(b.samples)


@pytest.mark.parametrize("modality", MODALITIES)
def test_generation_is_deterministic(modality):
    cfg = tiny(modality)
    assert _same(gen_synthetic(cfg), gen_synthetic(cfg))
    other = gen_synthetic(cfg, seed=cfg.seed + 1)
    assert other.samples[0].payload.tobytes() != gen_synthetic(cfg).samples[0].payload.tobytes()


@pytest.mark.parametrize("modality", MODALITIES)
def test_payloads_finite_and_shaped(modality):
    cfg = tiny(modality)
    ds = gen_synthetic(cfg)
    tok = cfg.tokenizer
    shape = {
        "points": (tok.n_points, 3), "audio": (int(tok.sample_rate * tok.clip_seconds),),
        "depth": (tok.height, tok.width, 1), "tactile": (tok.height, tok.width, 3),
        "eeg": (tok.eeg_channels, tok.eeg_steps),
    }[modality]
    for s in ds.samples:
        assert s.payload.shape == shape and np.all(np.isfinite(s.payload))
        assert s.image.shape == (16, 16, 3) and s.image.min() >= 0 and s.image.max() <= 1
        assert ds.class_names[s.label] in s.text
    if modality == "tactile":
        assert all(s.payload.min() >= 0 and s.payload.max() <= 1 for s in ds.samples)
    if modality == "depth":
        assert all(s.payload.min() > 0 for s in ds.samples)


def test_balanced_counts():
    cfg = tiny("points", per_class=10, n_classes=2)
    cfg.data.val_per_class = cfg.data.test_per_class = 0
    ds = gen_synthetic(cfg)
    assert len(ds.samples) == 20
    assert np.bincount([s.label for s in ds.split("train")]).tolist() == [10, 10]
    assert len({s.id for s in ds.samples}) == 20


def test_needs_two_classes():
    with pytest.raises(ConfigurationError):
        gen_synthetic(tiny("points", n_classes=1))


def test_extra_classes_get_variant_names():
    assert class_names_for("points", 7) == ["sphere", "cube", "cylinder", "torus", "cone", "sphere2", "cube2"]


def test_sphere_and_cube_separable_by_radius_variance():
    spheres = [radius_variance(gen_points(0, 0, 256, 0.02, np.random.default_rng(i))) for i in range(30)]
    cubes = [radius_variance(gen_points(1, 0, 256, 0.02, np.random.default_rng(100 + i))) for i in range(30)]
    assert max(spheres) < min(cubes)


@pytest.mark.parametrize("modality", MODALITIES)
def test_save_load_bit_identical(modality, tmp_path):
    cfg = tiny(modality)
    ds = gen_synthetic(cfg)
    save_dataset(ds, tmp_path, cfg.tokenizer.sample_rate)
    back = load_dataset(tmp_path)
    assert back.modality == modality and back.class_names == ds.class_names and back.vocab == ds.vocab
    assert _same(ds, back)
