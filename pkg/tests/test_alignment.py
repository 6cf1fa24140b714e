import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omnilens.alignment import (
    Temperature, anchor_loss, contrastive_loss, directional_terms, effective_tau, multi_anchor_weighting,
    training_step,
)
from omnilens.backbone import assert_frozen, project_embedding, snapshot
from omnilens.errors import DataError, InputError
from omnilens.harness.acceptance import micro_batch
from omnilens.harness.config import micro_config
from omnilens.harness.train import Teachers
from omnilens.model import ModalityEncoder
from omnilens.numerics import tensor as T
from omnilens.numerics.gradcheck import finite_diff_grad
from omnilens.numerics.optim import AdamW


def unit(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def full_sum(hx, anchors, tau):
    """The objective written as one double sum over anchors and samples."""
    b = len(hx)
    total = 0.0
    for ha in anchors:
        for i in range(b):
            row = [math.exp(float(hx[i] @ ha[j]) / tau) for j in range(b)]
            col = [math.exp(float(ha[i] @ hx[j]) / tau) for j in range(b)]
            total += math.log(row[i] / sum(row)) + math.log(col[i] / sum(col))
    return -total / (2 * b * len(anchors))


def test_single_pair_loss_is_zero(f64, rng):
    for anchors in (1, 2, 3):
        hx = unit(rng, 1, 4)
        assert float(contrastive_loss(hx, [unit(rng, 1, 4) for _ in range(anchors)], 0.07).data) == 0.0


def test_two_pair_value(f64):
    h = np.eye(2)
    loss = float(contrastive_loss(h, [h], 1.0).data)
    assert abs(loss - (-math.log(math.e / (math.e + 1)))) <= 1e-9
    assert abs(loss - 0.31326168751822286) <= 1e-9


def test_matches_full_sum_with_two_anchors(f64, rng):
    hx, hi, ht = unit(rng, 5, 6), unit(rng, 5, 6), unit(rng, 5, 6)
    loss = float(contrastive_loss(hx, [hi, ht], 0.3).data)
    assert loss == pytest.approx(full_sum(hx, [hi, ht], 0.3), rel=1e-12)
    per = [float(anchor_loss(hx, a, 0.3).data) for a in (hi, ht)]
    assert per[0] != pytest.approx(per[1])
    assert loss == pytest.approx(sum(per) / 2, rel=1e-14)


def test_anchor_weighting():
    v = T.Tensor(2.5)
    assert float(multi_anchor_weighting([v]).data) == 2.5
    assert float(multi_anchor_weighting([v, T.Tensor(2.5)]).data) == 2.5
    with pytest.raises(InputError):
        multi_anchor_weighting([])


def test_identical_sets_have_equal_directions(f64, rng):
    h = unit(rng, 6, 5)
    a, b = directional_terms(h, h, 0.1)
    assert float(a.data) == pytest.approx(float(b.data), rel=1e-14)


def test_input_errors(f64, rng):
    with pytest.raises(InputError):
        contrastive_loss(np.zeros((0, 4)), [np.zeros((0, 4))], 0.07)
    with pytest.raises(InputError):
        contrastive_loss(unit(rng, 3, 4), [unit(rng, 2, 4)], 0.07)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 8), st.integers(1, 3))
def test_loss_invariant_under_batch_permutation(seed, b, n_anchors):
    rng = np.random.default_rng(seed)
    with T.precision("f64"):
        hx = unit(rng, b, 4)
        anchors = [unit(rng, b, 4) for _ in range(n_anchors)]
        perm = rng.permutation(b)
        base = float(contrastive_loss(hx, anchors, 0.2).data)
        shuffled = float(contrastive_loss(hx[perm], [a[perm] for a in anchors], 0.2).data)
    assert shuffled == pytest.approx(base, rel=1e-12, abs=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 100.0))
def test_loss_invariant_to_feature_scale(seed, c):
    rng = np.random.default_rng(seed)
    with T.precision("f64"):
        enc = ModalityEncoder(micro_config("eeg"), seed=0)
        feats = rng.standard_normal((4, 8))
        targets = [unit(rng, 4, 8)]
        a = contrastive_loss(project_embedding(T.Tensor(feats), enc.trunk), targets, enc.temperature)
        b = contrastive_loss(project_embedding(T.Tensor(c * feats), enc.trunk), targets, enc.temperature)
    assert float(b.data) == pytest.approx(float(a.data), rel=1e-12)


def test_temperature_clamp(f64):
    temp = Temperature()
    assert float(effective_tau(temp).data) == pytest.approx(0.07, rel=1e-15)
    temp.log_tau.data = np.array(-50.0)
    assert float(effective_tau(temp).data) == 0.01
    temp.log_tau.data = np.array(5.0)
    assert float(effective_tau(temp).data) == 1.0


def test_temperature_gradient(f64, rng):
    temp = Temperature(0.2)
    hx, ha = unit(rng, 4, 3), unit(rng, 4, 3)
    loss = lambda: contrastive_loss(hx, [ha], temp)
    (numeric,) = finite_diff_grad(loss, [temp.log_tau], h=1e-6)
    temp.log_tau.grad = None
    loss().backward()
    assert temp.log_tau.grad == pytest.approx(numeric, rel=1e-7)
    temp.log_tau.data = np.array(-10.0)
    temp.log_tau.grad = None
    loss().backward()
    assert temp.log_tau.grad == 0.0


def _encoder(modality="points"):
    cfg = micro_config(modality)
    return cfg, ModalityEncoder(cfg, seed=0)


def test_zero_lr_step_changes_nothing():
    cfg, enc = _encoder()
    inputs, targets = micro_batch(cfg)
    before = {k: v.copy() for k, v in enc.state_dict().items()}
    opt = AdamW(enc.trainable_parameters())
    training_step(enc, inputs, [t.astype(np.float32) for t in targets], opt, lr=0.0)
    assert all(before[k].tobytes() == v.tobytes() for k, v in enc.state_dict().items())
    assert all(p.grad is None for p in enc.parameters())


def test_repeated_pair_loss_non_increasing():
    cfg, enc = _encoder("depth")
    inputs, targets = micro_batch(cfg, b=2, seed=1)
    opt = AdamW(enc.trainable_parameters(), lr=1e-3)
    snap = snapshot(enc.trunk)
    losses = [training_step(enc, inputs, targets, opt) for _ in range(10)]
    assert all(b <= a + 1e-7 for a, b in zip(losses, losses[1:]))
    assert assert_frozen(enc.trunk, snap)


def test_missing_store_row_is_data_error():
    from omnilens.anchors import FeatureStore
    from omnilens.harness.data import Sample

    teachers = Teachers(image=None, text=None, class_matrix=np.eye(2), store=FeatureStore(2, 1), kinds=["text"])
    with pytest.raises(DataError):
        teachers.targets([Sample(id="nope", label=0, split="train", payload=None, image=None, text="", text_ids=[])])
