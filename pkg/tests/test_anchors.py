import numpy as np
import pytest

from oracles import block, layer_norm
from omnilens.anchors import (
    DEFAULT_TEMPLATES, AnchorSpec, FeatureStore, ImageTeacher, ImageTeacherConfig, TextTeacher,
    build_vocab, class_template_embeddings, store_roundtrip, tokenize_text,
)
from omnilens.errors import ConfigurationError, DataError, FormatError, InputError
from omnilens.numerics import tensor as T


def test_anchor_spec_validation():
    AnchorSpec(["text"]).validate()
    for anchors in ([], ["audio"], ["image", "image"]):
        with pytest.raises(ConfigurationError):
            AnchorSpec(anchors).validate()


def test_image_teacher_deterministic_and_unit(rng):
    teacher = ImageTeacher(ImageTeacherConfig(), 32, seed=1)
    images = rng.uniform(0, 1, (4, 16, 16, 3))
    a, b = teacher.encode(images), teacher.encode(images)
    assert a.tobytes() == b.tobytes()
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-6)
    assert teacher.encode(images[0]).shape == (1, 32)
    with pytest.raises(ConfigurationError):
        teacher.encode(np.zeros((8, 8, 3)))
    assert all(p.frozen for p in teacher.parameters())


def test_image_teacher_matches_layer_by_layer(f64, rng):
    cfg = ImageTeacherConfig(size=8, patch=4, d=8, heads=2)
    teacher = ImageTeacher(cfg, 4, seed=2)
    for p in teacher.parameters():
        p.data = p.data + 0.1 * rng.standard_normal(p.shape)
    image = rng.uniform(0, 1, (8, 8, 3))
    patches = [image[r : r + 4, c : c + 4].reshape(-1) for r in (0, 4) for c in (0, 4)]
    tokens = np.array([p @ teacher.patch_proj.weight.data + teacher.patch_proj.bias.data for p in patches])
    trunk = teacher.trunk
    h = np.concatenate([trunk.cls_token.data, tokens]) + trunk.pos_table.data
    for blk in trunk.blocks:
        h = block(h, blk)
    cls = layer_norm(h[0], trunk.norm.gain.data, trunk.norm.bias.data)
    out = cls @ trunk.proj.weight.data
    np.testing.assert_allclose(teacher.encode(image)[0], out / np.linalg.norm(out), rtol=1e-10, atol=1e-12)


def test_text_teacher(f64, rng):
    vocab = build_vocab(["cube", "sphere"])
    teacher = TextTeacher(vocab, 8, seed=3)
    idx = vocab.index("cube")
    single = teacher.table.data[idx] @ teacher.proj.weight.data
    np.testing.assert_allclose(teacher.encode_ids([idx]), single / np.linalg.norm(single), rtol=1e-13)
    ids = rng.integers(0, len(vocab), 6)
    raw = teacher.table.data[ids].mean(axis=0) @ teacher.proj.weight.data
    np.testing.assert_allclose(teacher.encode_ids(ids), raw / np.linalg.norm(raw), rtol=1e-12)
    assert np.allclose(teacher.encode_ids(ids[::-1]), teacher.encode_ids(ids), rtol=1e-14)
    np.testing.assert_array_equal(teacher.encode("A photo of a CUBE."), teacher.encode_ids(tokenize_text("a photo of a cube", vocab)))
    for bad in ([], [len(vocab)], [-1]):
        with pytest.raises(InputError):
            teacher.encode_ids(bad)
    with pytest.raises(InputError):
        teacher.encode("a photo of a dodecahedron")


def test_class_template_embeddings(f64):
    names = ["cube", "sphere", "torus"]
    teacher = TextTeacher(build_vocab(names), 8, seed=3)
    one = class_template_embeddings(["cube"], ["a photo of a {}."], teacher)
    np.testing.assert_allclose(one[0], teacher.encode("a photo of a cube."), rtol=1e-14, atol=1e-15)
    dup = class_template_embeddings(names, ["a {} texture."] * 3, teacher)
    np.testing.assert_allclose(dup, class_template_embeddings(names, ["a {} texture."], teacher), rtol=1e-14)
    three = DEFAULT_TEMPLATES[:3]
    out = class_template_embeddings(names, three, teacher)
    for row, name in zip(out, names):
        mean = sum(teacher.encode(t.format(name)) for t in three) / 3
        np.testing.assert_allclose(row, mean / np.linalg.norm(mean), rtol=1e-13)
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0)
    with pytest.raises(InputError):
        class_template_embeddings([], three, teacher)
    with pytest.raises(InputError):
        class_template_embeddings(names, [], teacher)


def _unit(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def test_store_roundtrips(tmp_path, rng):
    empty = store_roundtrip(FeatureStore(4, 2), tmp_path / "e.olfs")
    assert len(empty) == 0 and empty.d_out == 4 and empty.n_anchors == 2
    one = FeatureStore(4, 2)
    one.add("a", _unit(rng, 2, 4))
    back = store_roundtrip(one, tmp_path / "o.olfs")
    assert back.get("a").tobytes() == one.get("a").tobytes()
    big = FeatureStore(16, 2)
    for i in range(1000):
        big.add(f"sample-{i}", _unit(rng, 2, 16))
    back = store_roundtrip(big, tmp_path / "b.olfs")
    assert list(back.rows) == list(big.rows)
    assert all(back.get(k).tobytes() == v.tobytes() for k, v in big.rows.items())
    back.write(tmp_path / "c.olfs")
    assert (tmp_path / "c.olfs").read_bytes() == (tmp_path / "b.olfs").read_bytes()


def test_store_rejects_bad_rows(rng):
    store = FeatureStore(4, 1)
    with pytest.raises(InputError):
        store.add("x", np.ones(4))
    store.add("x", _unit(rng, 1, 4))
    with pytest.raises(InputError):
        store.add("x", _unit(rng, 1, 4))
    with pytest.raises(DataError):
        store.get("missing")
    assert "x" in store and "y" not in store


def test_store_format_errors(tmp_path, rng):
    store = FeatureStore(4, 1)
    store.add("abc", _unit(rng, 1, 4))
    store.write(tmp_path / "s.olfs")
    raw = (tmp_path / "s.olfs").read_bytes()
    cases = {"magic": (b"NOPE" + raw[4:], 0), "version": (raw[:4] + b"\x09\0\0\0" + raw[8:], 4),
             "header": (raw[:10], 10), "record": (raw[:-1], 16)}
    for name, (buf, offset) in cases.items():
        (tmp_path / f"{name}.olfs").write_bytes(buf)
        with pytest.raises(FormatError) as exc:
            FeatureStore.read(tmp_path / f"{name}.olfs")
        assert exc.value.offset == offset, name
