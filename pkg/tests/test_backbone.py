import numpy as np
import pytest

from oracles import block, layer_norm, randomize
from omnilens.backbone import (
    MODES, BackboneConfig, assert_frozen, build_trunk, interpolate_pos_table, interpolation_matrix,
    project_embedding, snapshot, trunk_forward,
)
from omnilens.errors import ConfigurationError, DegenerateInputError
from omnilens.numerics import tensor as T
from omnilens.numerics.optim import AdamW


def small(**kw):
    base = dict(L=2, l_range=(1, 2), d=8, heads=2, d_out=4, pos_len=6, mlp_ratio=2)
    base.update(kw)
    return BackboneConfig(**base)


def test_same_seed_same_trunk():
    a, b = build_trunk(small(), 3).state_dict(), build_trunk(small(), 3).state_dict()
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    c = build_trunk(small(), 4).state_dict()
    assert any(a[k].tobytes() != c[k].tobytes() for k in a)


@pytest.mark.parametrize("l_range,expected", [((5, 12), list(range(4, 12))), ((1, 12), list(range(12)))])
def test_block_range_selects_blocks(l_range, expected, rng):
    trunk = build_trunk(small(L=12, l_range=l_range, pos_len=4), 0)
    touched = []
    for i, blk in enumerate(trunk.blocks):
        trunk.blocks[i] = (lambda j, b: lambda x: (touched.append(j), b(x))[1])(i, blk)
    trunk_forward(T.Tensor(rng.standard_normal((1, 3, 8))), trunk)
    assert touched == expected


def test_empty_range_is_positions_only(f64, rng):
    trunk = build_trunk(small(l_range=None, final_norm=False), 0)
    x = rng.standard_normal((2, 5, 8))
    seq, pooled = trunk_forward(T.Tensor(x), trunk)
    cls = np.broadcast_to(trunk.cls_token.data, (2, 1, 8))
    expect = np.concatenate([cls, x], axis=1) + trunk.pos_table.data
    np.testing.assert_array_equal(seq.data, expect)
    np.testing.assert_array_equal(pooled.data, expect[:, 0])


def test_micro_trunk_matches_loop_oracle(f64, rng):
    trunk = randomize(build_trunk(small(), 0), rng)
    x = rng.standard_normal((1, 5, 8))
    seq, pooled = trunk_forward(T.Tensor(x), trunk)
    h = np.concatenate([trunk.cls_token.data, x[0]]) + trunk.pos_table.data
    for blk in trunk.blocks:
        h = block(h, blk)
    h = np.array([layer_norm(r, trunk.norm.gain.data, trunk.norm.bias.data) for r in h])
    np.testing.assert_allclose(seq.data[0], h, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(pooled.data[0], h[0], rtol=1e-10, atol=1e-12)


def test_mean_pool_and_no_cls(f64, rng):
    trunk = build_trunk(small(use_cls=False, pool="mean"), 0)
    seq, pooled = trunk_forward(T.Tensor(rng.standard_normal((2, 4, 8))), trunk)
    assert seq.shape == (2, 4, 8)
    np.testing.assert_allclose(pooled.data, seq.data.mean(axis=1))


def test_forward_deterministic_and_width_checked(rng):
    trunk = build_trunk(small(), 0)
    x = T.Tensor(rng.standard_normal((2, 7, 8)).astype(np.float32))
    assert trunk_forward(x, trunk)[0].data.tobytes() == trunk_forward(x, trunk)[0].data.tobytes()
    with pytest.raises(ConfigurationError):
        trunk_forward(T.Tensor(np.zeros((1, 3, 6))), trunk)


def test_config_validation():
    for cfg in (small(l_range=(0, 2)), small(l_range=(2, 3)), small(heads=3), small(mode="lora"),
                small(pool="max"), small(use_cls=False)):
        with pytest.raises(ConfigurationError):
            cfg.validate()


def test_native_length_needs_no_interpolation(rng):
    table = T.Tensor(rng.standard_normal((197, 8)))
    assert interpolate_pos_table(table, 197) is table


def test_interpolation_identity_and_endpoints(rng):
    table = rng.standard_normal((5, 3))
    assert interpolate_pos_table(table, 5) is table
    # class row, then [a, b, c] resampled to two rows keeps the end points
    out = interpolate_pos_table(table[:4], 3)
    np.testing.assert_array_equal(out, table[[0, 1, 3]])


def direct_interp(body, new_body):
    xs_new = np.linspace(0, len(body) - 1, new_body)
    return np.stack([np.interp(xs_new, np.arange(len(body)), body[:, c]) for c in range(body.shape[1])], axis=1)


def test_interpolation_matches_direct_oracle(rng):
    table = rng.standard_normal((9, 4))
    for new_len in (2, 5, 17, 18, 40):
        out = interpolate_pos_table(table, new_len)
        np.testing.assert_array_equal(out[0], table[0])
        np.testing.assert_allclose(out[1:], direct_interp(table[1:], new_len - 1), rtol=1e-13, atol=1e-14)


def test_interpolation_doubling_keeps_rows_at_even_positions(rng):
    table = rng.standard_normal((9, 4))
    body = table[1:]
    out = interpolate_pos_table(table, 1 + 2 * len(body) - 1)[1:]
    np.testing.assert_array_equal(out[::2], body)
    np.testing.assert_allclose(out[1::2], 0.5 * (body[:-1] + body[1:]), rtol=1e-15)


def test_bilinear_grid_interpolation(rng):
    table = rng.standard_normal((1 + 9, 2))
    out = interpolate_pos_table(table, 1 + 25, grid=(3, 3), new_grid=(5, 5))
    grid = table[1:].reshape(3, 3, 2)
    rows = np.stack([direct_interp(grid[:, j], 5) for j in range(3)], axis=1)
    full = np.stack([direct_interp(rows[i], 5) for i in range(5)])
    np.testing.assert_allclose(out[1:].reshape(5, 5, 2), full, rtol=1e-13, atol=1e-14)
    with pytest.raises(ConfigurationError):
        interpolate_pos_table(table, 17, grid=(3, 3), new_grid=(5, 5))


def test_interpolation_errors():
    with pytest.raises(ConfigurationError):
        interpolate_pos_table(np.zeros((1, 2)), 3)
    with pytest.raises(ConfigurationError):
        interpolate_pos_table(np.zeros((4, 2)), 0)
    with pytest.raises(ConfigurationError):
        interpolation_matrix(3, 0)


def test_interpolation_rows_are_convex():
    w = interpolation_matrix(7, 23)
    np.testing.assert_allclose(w.sum(axis=1), 1.0)
    assert np.all(w >= 0)


def test_projection(f64, rng):
    trunk = build_trunk(small(d_out=8), 0)
    trunk.proj.weight.data = np.eye(8)
    e3 = np.eye(8)[3:4]
    assert np.array_equal(project_embedding(T.Tensor(e3), trunk).data, e3)
    trunk.proj.weight.data = rng.standard_normal((8, 8))
    v = rng.standard_normal((3, 8))
    out = project_embedding(T.Tensor(v), trunk).data
    np.testing.assert_allclose(project_embedding(T.Tensor(5 * v), trunk).data, out, atol=1e-15)
    raw = v @ trunk.proj.weight.data
    np.testing.assert_allclose(out, raw / np.linalg.norm(raw, axis=1, keepdims=True), rtol=1e-13)
    with pytest.raises(DegenerateInputError):
        project_embedding(T.Tensor(np.zeros((1, 8))), trunk)


def _one_step(trunk, rng):
    params = trunk.trainable_parameters()
    before = {id(p): p.data.copy() for p in trunk.parameters()}
    opt = AdamW(params, lr=1e-2)
    emb = trunk.embed(T.Tensor(rng.standard_normal((3, 4, 8)).astype(np.float32)))
    (emb * T.Tensor(rng.standard_normal(emb.shape).astype(np.float32))).sum().backward()
    opt.step()
    return {n for n, p in trunk.named_parameters() if p.data.tobytes() != before[id(p)].tobytes()}


@pytest.mark.parametrize("mode", sorted(MODES))
def test_modes_move_expected_parameters(mode, rng):
    trunk = build_trunk(small(mode=mode), 0)
    snap = snapshot(trunk)
    assert assert_frozen(trunk, snap)
    moved = _one_step(trunk, rng)
    assert "proj.weight" in moved and "cls_token" in moved
    blocks_moved = any(n.startswith("blocks.") for n in moved)
    assert blocks_moved == (mode in ("scratch", "pt_tune"))
    assert assert_frozen(trunk, snap) == (mode in ("lens", "frozen"))


def test_cls_and_proj_can_be_frozen(rng):
    trunk = build_trunk(small(train_cls=False, train_proj=False), 0)
    assert trunk.trainable_parameters() == []


def test_unfreezing_one_block_breaks_snapshot(rng):
    trunk = build_trunk(small(), 0)
    snap = snapshot(trunk)
    trunk.blocks[0].set_frozen(False)
    _one_step(trunk, rng)
    assert not assert_frozen(trunk, snap)
