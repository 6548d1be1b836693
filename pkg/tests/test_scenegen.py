import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gnm.scenegen import (BadMagic, CountMismatch, DatasetKind, SchemaVersionMismatch, Truncated, generate,
                          load_dataset, load_mnist_idx, serialize_dataset, validate_scene, write_idx_images,
                          write_idx_labels)
from gnm.scenegen.arrow import SHAPES, shape_mask, shape_vertices
from gnm.scenegen.mnist import QUADRANTS, quadrant_of

from corruptions import arrow_cases, mnist4_cases, mnist10_cases

KINDS = ["mnist4", "mnist10", "mnist4_10", "arrow"]


# -- IDX ingestion -----------------------------------------------------------


@pytest.fixture
def idx_pair(tmp_path):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, size=(12, 28, 28), dtype=np.uint8)
    labels = np.arange(12) % 10
    write_idx_images(tmp_path / "img", imgs)
    write_idx_labels(tmp_path / "lbl", labels)
    return tmp_path / "img", tmp_path / "lbl", imgs, labels


def test_idx_roundtrip(idx_pair):
    ip, lp, imgs, labels = idx_pair
    bank = load_mnist_idx(ip, lp)
    assert bank.images.shape == (12, 28, 28)
    assert bank.images.dtype == np.float32
    np.testing.assert_allclose(bank.images * 255, imgs, atol=1e-4)
    np.testing.assert_array_equal(bank.labels, labels)


def test_idx_bad_magic(idx_pair):
    ip, lp, *_ = idx_pair
    with pytest.raises(BadMagic):
        load_mnist_idx(lp, lp)


def test_idx_truncated(idx_pair, tmp_path):
    ip, lp, *_ = idx_pair
    short = tmp_path / "short"
    short.write_bytes(ip.read_bytes()[:-100])
    with pytest.raises(Truncated):
        load_mnist_idx(short, lp)


def test_idx_count_mismatch(idx_pair, tmp_path):
    ip, _, _, labels = idx_pair
    write_idx_labels(tmp_path / "few", labels[:5])
    with pytest.raises(CountMismatch):
        load_mnist_idx(ip, tmp_path / "few")


# -- generators --------------------------------------------------------------


@pytest.mark.parametrize("kind", KINDS)
def test_generated_scenes_are_valid(kind, bank):
    for image, spec in generate(kind, 60, seed=11, bank=bank):
        assert image.shape == (128, 128, 3) and image.dtype == np.uint8
        ok, violations = validate_scene(spec)
        assert ok, violations


@pytest.mark.parametrize("kind", KINDS)
def test_generation_is_seed_deterministic(kind, bank):
    a = generate(kind, 5, seed=3, bank=bank)
    b = generate(kind, 5, seed=3, bank=bank)
    c = generate(kind, 5, seed=4, bank=bank)
    for (ia, sa), (ib, sb) in zip(a, b):
        assert ia.tobytes() == ib.tobytes()
        assert json.dumps(sa.to_json(), sort_keys=True) == json.dumps(sb.to_json(), sort_keys=True)
    assert any(ia.tobytes() != ic.tobytes() for (ia, _), (ic, _) in zip(a, c))


def test_start_offset_matches_slice(bank):
    full = generate("mnist4", 6, seed=2, bank=bank)
    tail = generate("mnist4", 3, seed=2, bank=bank, start=3)
    for (a, _), (b, _) in zip(full[3:], tail):
        assert a.tobytes() == b.tobytes()


def test_mnist4_rules(bank):
    for _, spec in generate("mnist4", 20, seed=0, bank=bank):
        cls = [o.cls for o in spec.objects]
        assert [o.quadrant for o in spec.objects] == list(QUADRANTS)
        assert 0 <= cls[0] <= 6 and cls == list(range(cls[0], cls[0] + 4))


def test_mnist10_swap_frequency(bank):
    swaps = [spec.swapped for _, spec in generate("mnist10", 200, seed=0, bank=bank)]
    assert 0.35 < np.mean(swaps) < 0.65


def test_mnist4_10_mixes_both(bank):
    variants = {spec.meta["variant"] for _, spec in generate("mnist4_10", 40, seed=0, bank=bank)}
    assert variants == {"MNIST4", "MNIST10"}


def test_arrow_is_topmost_and_points(bank):
    for image, spec in generate("arrow", 20, seed=1):
        assert spec.objects[-1].cls == "arrow"
        assert len({o.style for o in spec.objects}) == 1


def test_needs_bank():
    with pytest.raises(ValueError):
        generate("mnist4", 2, seed=0)


def test_count_must_be_positive(bank):
    with pytest.raises(ValueError):
        generate("mnist4", 0, seed=0, bank=bank)


def test_small_canvas(bank):
    for image, spec in generate("mnist4", 10, seed=0, bank=bank, image_size=64):
        assert image.shape == (64, 64, 3) and spec.image_size == 64
        assert validate_scene(spec)[0]


# -- validator ---------------------------------------------------------------


@pytest.mark.parametrize("kind,cases", [("mnist4", mnist4_cases), ("mnist10", mnist10_cases),
                                        ("arrow", arrow_cases)])
def test_corruptions_fail_with_expected_id(kind, cases, bank):
    for _, spec in generate(kind, 10, seed=8, bank=bank):
        for name, broken, expected in cases(spec):
            ok, violations = validate_scene(broken)
            assert not ok, name
            assert expected in violations, (name, violations)


def test_validate_tolerance_admits_small_shifts(bank):
    _, spec = generate("mnist4", 1, seed=0, bank=bank)[0]
    o = spec.objects[0]
    o.center = (o.center[0] + 1.0, o.center[1])
    assert "position-symmetry" in validate_scene(spec)[1]
    assert "position-symmetry" not in validate_scene(spec, pos_tol=2.0)[1]


@given(x=st.floats(0, 127.99), y=st.floats(0, 127.99))
def test_quadrant_of_partitions(x, y):
    q = quadrant_of(x, y, 128)
    assert q in QUADRANTS
    assert (q in ("TL", "TR")) == (y < 64)
    assert (q in ("TL", "BL")) == (x < 64)


@settings(max_examples=40, deadline=None)
@given(shape=st.sampled_from(SHAPES + ("arrow",)), r=st.floats(6, 14), angle=st.floats(-180, 180),
       cx=st.floats(30, 98), cy=st.floats(30, 98))
def test_shape_vertices_within_radius(shape, r, angle, cx, cy):
    v = shape_vertices(shape, cx, cy, r, angle)
    assert np.all(np.hypot(v[:, 0] - cx, v[:, 1] - cy) <= r + 1e-6)
    assert shape_mask(shape, cx, cy, r, angle, 128).sum() > 0


# -- storage -----------------------------------------------------------------


def test_dataset_roundtrip(tmp_path, bank):
    scenes = generate("mnist10", 4, seed=5, bank=bank)
    serialize_dataset(scenes, tmp_path / "ds", kind="MNIST10", seed=5)
    ds = load_dataset(tmp_path / "ds")
    assert len(ds) == 4 and ds.kind == "MNIST10"
    for i, (image, spec) in enumerate(ds):
        np.testing.assert_array_equal(image, scenes[i][0])
        assert spec.to_json() == scenes[i][1].to_json()
        assert spec.dataset_kind is DatasetKind.MNIST10


def test_serialization_is_byte_deterministic(tmp_path, bank):
    for d in ("a", "b"):
        serialize_dataset(generate("arrow", 3, seed=1), tmp_path / d, seed=1)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_schema_version_mismatch(tmp_path):
    serialize_dataset(generate("arrow", 1, seed=0), tmp_path)
    m = json.loads((tmp_path / "manifest.json").read_text())
    m["schema_version"] = 99
    (tmp_path / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(SchemaVersionMismatch):
        load_dataset(tmp_path)


def test_missing_spec_key(tmp_path):
    serialize_dataset(generate("arrow", 1, seed=0), tmp_path)
    path = tmp_path / "specs" / "000000.json"
    d = json.loads(path.read_text())
    del d["objects"][0]["bbox"]
    path.write_text(json.dumps(d))
    with pytest.raises(SchemaVersionMismatch):
        load_dataset(tmp_path).spec(0)
