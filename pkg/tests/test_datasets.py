"""IDX I/O, scrambling, CSV loading, and split invariants."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eapcr.datasets import (
    ImageDataset,
    TabularDataset,
    draw_disjoint_subsets,
    load_image_dataset,
    load_tabular,
    read_idx_images,
    read_idx_labels,
    scramble_images,
    split,
    synthesize_scrambled,
    take,
    write_idx_images,
    write_idx_labels,
)
from eapcr.encoding import FeatureSchema, FeatureSpec, TargetSpec
from eapcr.errors import DataError, FormatError, SchemaError
from eapcr.permutation import designed_permutation, random_permutation


def toy_images(n=6, side=4, seed=0):
    rng = np.random.default_rng(seed)
    return ImageDataset(
        rng.integers(0, 256, size=(n, side, side), dtype=np.uint8),
        (np.arange(n) % 3).astype(np.uint8),
    )


# ---------------------------------------------------------------------------
# IDX binary I/O


def test_idx_image_round_trip(tmp_path):
    ds = toy_images()
    p = tmp_path / "imgs.idx"
    write_idx_images(p, ds.images)
    again = read_idx_images(p)
    np.testing.assert_array_equal(again, ds.images)
    assert again.dtype == np.uint8


def test_idx_label_round_trip(tmp_path):
    labels = np.array([0, 9, 3, 3], dtype=np.uint8)
    p = tmp_path / "labels.idx"
    write_idx_labels(p, labels)
    np.testing.assert_array_equal(read_idx_labels(p), labels)


def test_idx_header_layout_is_big_endian(tmp_path):
    p = tmp_path / "imgs.idx"
    write_idx_images(p, np.zeros((2, 3, 3), dtype=np.uint8))
    raw = p.read_bytes()
    assert raw[:16] == struct.pack(">IIII", 0x803, 2, 3, 3)
    assert len(raw) == 16 + 2 * 9


def test_idx_rejects_wrong_magic(tmp_path):
    p = tmp_path / "bad.idx"
    p.write_bytes(struct.pack(">IIII", 0x9999, 1, 2, 2) + b"\0" * 4)
    with pytest.raises(FormatError):
        read_idx_images(p)
    with pytest.raises(FormatError):
        read_idx_labels(p)


def test_idx_rejects_truncation_and_trailing(tmp_path):
    p = tmp_path / "short.idx"
    p.write_bytes(struct.pack(">IIII", 0x803, 2, 2, 2) + b"\0" * 7)
    with pytest.raises(OSError):
        read_idx_images(p)
    p.write_bytes(struct.pack(">IIII", 0x803, 2, 2, 2) + b"\0" * 9)
    with pytest.raises(FormatError):
        read_idx_images(p)


def test_load_image_dataset_checks(tmp_path):
    ds = toy_images(side=4)
    ip, lp = tmp_path / "i.idx", tmp_path / "l.idx"
    write_idx_images(ip, ds.images)
    write_idx_labels(lp, ds.labels)
    loaded = load_image_dataset(ip, lp, side=4)
    np.testing.assert_array_equal(loaded.images, ds.images)
    np.testing.assert_array_equal(loaded.labels, ds.labels)
    with pytest.raises(FormatError):
        load_image_dataset(ip, lp, side=28)
    write_idx_labels(lp, ds.labels[:-1])
    with pytest.raises(FormatError):
        load_image_dataset(ip, lp, side=4)
    write_idx_labels(lp, np.full(len(ds), 11, dtype=np.uint8))
    with pytest.raises(FormatError):
        load_image_dataset(ip, lp, side=4)


def test_image_dataset_validates_counts():
    with pytest.raises(DataError):
        ImageDataset(np.zeros((3, 2, 2), np.uint8), np.zeros(4, np.uint8))


# ---------------------------------------------------------------------------
# scrambling


def test_scramble_moves_pixels_where_told():
    img = np.arange(16, dtype=np.uint8).reshape(1, 4, 4)
    perm = designed_permutation(4)  # sigma = [0, 2, 1, 3]
    out = scramble_images(img, perm)
    sig = perm.sigma
    for r in range(4):
        for c in range(4):
            assert out[0, sig[r], sig[c]] == img[0, r, c]


def test_scramble_keeps_pixel_multiset():
    ds = toy_images(n=5, side=6, seed=3)
    out = scramble_images(ds.images)
    for i in range(len(ds)):
        np.testing.assert_array_equal(np.sort(out[i].ravel()), np.sort(ds.images[i].ravel()))


def test_scramble_inverse_recovers_original():
    ds = toy_images(n=4, side=7, seed=1)
    perm = random_permutation(7, seed=9)
    out = scramble_images(ds.images, perm)
    back = scramble_images(out, perm.inverse())
    np.testing.assert_array_equal(back, ds.images)


def test_scramble_actually_changes_layout():
    img = np.arange(28 * 28, dtype=np.uint8).reshape(1, 28, 28)
    out = scramble_images(img)
    assert not np.array_equal(out, img)


def test_synthesize_keeps_labels_and_renames():
    ds = toy_images()
    syn = synthesize_scrambled(ds)
    np.testing.assert_array_equal(syn.labels, ds.labels)
    assert syn.name.endswith("-scrambled")
    assert len(syn) == len(ds)


def test_scramble_shape_guards():
    with pytest.raises(DataError):
        scramble_images(np.zeros((1, 4, 5), np.uint8))
    with pytest.raises(DataError):
        scramble_images(np.zeros((1, 4, 4), np.uint8), designed_permutation(9))


# ---------------------------------------------------------------------------
# tabular CSV


def heart_like_schema(binarize=True):
    return FeatureSchema(
        (FeatureSpec("sex", "categorical"), FeatureSpec("age", "numeric", quantile_bins=2)),
        TargetSpec("num", "class", binarize_positive=binarize),
    )


def test_load_tabular_reads_named_columns(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("age,extra,sex,num\n63,junk,1,0\n41,junk,0,2\n\n55,junk,1,1\n")
    ds = load_tabular(p, heart_like_schema())
    assert ds.rows == [["1", "63"], ["0", "41"], ["1", "55"]]
    # targets collapse to presence/absence when binarization is on
    np.testing.assert_array_equal(ds.targets, [0, 1, 1])
    assert ds.targets.dtype == np.int64


def test_load_tabular_without_binarization(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("age,sex,num\n63,1,0\n41,0,2\n")
    ds = load_tabular(p, heart_like_schema(binarize=False))
    np.testing.assert_array_equal(ds.targets, [0, 2])


def test_load_tabular_real_target(tmp_path):
    schema = FeatureSchema(
        (FeatureSpec("x", "categorical"),), TargetSpec("y", "real")
    )
    p = tmp_path / "t.csv"
    p.write_text("x,y\na,1.5\nb,-0.25\n")
    ds = load_tabular(p, schema)
    np.testing.assert_array_equal(ds.targets, [1.5, -0.25])
    assert ds.targets.dtype == np.float64
    p.write_text("x,y\na,inf\n")
    with pytest.raises(DataError):
        load_tabular(p, schema)


def test_load_tabular_error_paths(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("")
    with pytest.raises(DataError):
        load_tabular(p, heart_like_schema())
    p.write_text("age,num\n63,0\n")
    with pytest.raises(SchemaError):
        load_tabular(p, heart_like_schema())  # sex column missing
    p.write_text("age,sex,num\n63,1\n")
    with pytest.raises(DataError):
        load_tabular(p, heart_like_schema())  # ragged row
    p.write_text("age,sex,num\n63,1,yes\n")
    with pytest.raises(DataError):
        load_tabular(p, heart_like_schema())  # unparseable class
    p.write_text("age,sex,num\n")
    with pytest.raises(DataError):
        load_tabular(p, heart_like_schema())  # header only


# ---------------------------------------------------------------------------
# splitting


def test_take_keeps_row_label_pairing():
    ds = toy_images(n=8)
    sub = take(ds, np.array([5, 1, 6]))
    np.testing.assert_array_equal(sub.labels, ds.labels[[5, 1, 6]])
    np.testing.assert_array_equal(sub.images, ds.images[[5, 1, 6]])
    tab = TabularDataset([["a"], ["b"], ["c"]], np.array([0, 1, 0]), heart_like_schema())
    sub = take(tab, np.array([2, 0]))
    assert sub.rows == [["c"], ["a"]]
    np.testing.assert_array_equal(sub.targets, [0, 0])


@settings(max_examples=30, deadline=None)
@given(st.integers(10, 60), st.floats(0.2, 0.8), st.integers(0, 999))
def test_split_partitions_without_loss(n, frac, seed):
    ds = toy_images(n=n, seed=seed)
    tr, te = split(ds, frac, seed)
    assert len(tr) + len(te) == n
    assert len(tr) == int(round(frac * n))
    merged = np.concatenate([tr.images, te.images]).reshape(n, -1)
    original = ds.images.reshape(n, -1)
    # partition: every original row appears exactly once across the two sides
    merged_sorted = merged[np.lexsort(merged.T)]
    original_sorted = original[np.lexsort(original.T)]
    np.testing.assert_array_equal(merged_sorted, original_sorted)


def test_split_is_seed_deterministic():
    ds = toy_images(n=20)
    a1, b1 = split(ds, 0.5, seed=7)
    a2, b2 = split(ds, 0.5, seed=7)
    np.testing.assert_array_equal(a1.images, a2.images)
    np.testing.assert_array_equal(b1.labels, b2.labels)
    a3, _ = split(ds, 0.5, seed=8)
    assert not np.array_equal(a1.images, a3.images)


def test_stratified_split_keeps_every_class_on_both_sides():
    labels = np.array([0] * 10 + [1] * 4 + [2] * 2, dtype=np.uint8)
    rng = np.random.default_rng(0)
    ds = ImageDataset(rng.integers(0, 256, (16, 3, 3), dtype=np.uint8), labels)
    tr, te = split(ds, 0.75, seed=3, stratified=True)
    for side in (tr, te):
        assert set(np.unique(side.labels)) == {0, 1, 2}
    counts = np.bincount(tr.labels, minlength=3)
    np.testing.assert_array_equal(counts, [np.round(0.75 * 10), 3, 1])


def test_stratified_split_rejects_singleton_class():
    labels = np.array([0, 0, 1], dtype=np.uint8)
    ds = ImageDataset(np.zeros((3, 2, 2), np.uint8), labels)
    with pytest.raises(DataError):
        split(ds, 0.5, seed=0, stratified=True)


def test_split_fraction_bounds():
    ds = toy_images()
    for frac in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(DataError):
            split(ds, frac, seed=0)


def test_disjoint_subsets_do_not_overlap():
    ds = toy_images(n=30, seed=2)
    tr, te = draw_disjoint_subsets(ds, 12, 9, seed=5)
    assert len(tr) == 12 and len(te) == 9
    tr_rows = {r.tobytes() for r in tr.images}
    te_rows = {r.tobytes() for r in te.images}
    assert not tr_rows & te_rows
    with pytest.raises(DataError):
        draw_disjoint_subsets(ds, 20, 20, seed=5)
