"""Information-gain tools, distance tables, and pattern recovery."""

import numpy as np
import pytest

from eapcr.analysis import (
    conditional_entropy,
    distance_dependence_table,
    distance_table_csv,
    entropy,
    info_gain,
    info_gain_demo,
    info_gain_joint,
    joint_counts,
    mutual_information_bits,
    pattern_from_attention,
    pattern_from_pixel_correlation,
    pattern_recall,
)
from eapcr.errors import DataError, DomainError
from eapcr.model import AttentionConfig, ConvSpec, MlpConfig, build_model


# ---------------------------------------------------------------------------
# entropy and information gain


def test_entropy_known_values():
    assert entropy([1, 1]) == 1.0
    assert entropy([5, 0]) == 0.0
    assert entropy([3, 3, 3, 3]) == 2.0
    np.testing.assert_allclose(entropy([3, 1]), 2.0 - 0.75 * np.log2(3))


def test_entropy_guards():
    with pytest.raises(DomainError):
        entropy([])
    with pytest.raises(DomainError):
        entropy([0, 0])
    with pytest.raises(DomainError):
        entropy([2, -1])


def test_conditional_entropy_extremes():
    # independent: knowing X tells nothing, H(Y|X) = H(Y)
    indep = np.array([[10, 20], [30, 60]])
    np.testing.assert_allclose(conditional_entropy(indep), entropy([30, 90]))
    # deterministic: each X column fixes Y
    det = np.array([[7, 0], [0, 3]])
    assert conditional_entropy(det) == 0.0
    with pytest.raises(DomainError):
        conditional_entropy(np.zeros((2, 2, 2)))


def test_info_gain_extremes():
    indep = np.array([[10, 20], [30, 60]])
    np.testing.assert_allclose(info_gain(indep), 0.0, atol=1e-15)
    det = np.array([[7, 0], [0, 3]])
    np.testing.assert_allclose(info_gain(det), entropy([7, 3]))


def test_joint_counts_builder():
    y = [0, 0, 1, 1, 1]
    x = [0, 1, 1, 1, 0]
    np.testing.assert_array_equal(joint_counts(y, x, 2, 2), [[1, 1], [1, 2]])


def test_mutual_information_extremes():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 2, 10_000)
    b = rng.integers(0, 2, 10_000)
    assert mutual_information_bits(a, b) < 0.005
    np.testing.assert_allclose(
        mutual_information_bits(a, a), entropy(np.bincount(a))
    )
    # relabeling one side preserves dependence
    np.testing.assert_allclose(
        mutual_information_bits(a, 1 - a), mutual_information_bits(a, a)
    )


def test_info_gain_joint_needs_three_axes():
    with pytest.raises(DomainError):
        info_gain_joint(np.ones((2, 2)))


def test_gain_demo_inequality_chain():
    rows = info_gain_demo()
    assert [r.name for r in rows] == [
        "xor IG(Y;A)",
        "xor IG(Y;B)",
        "xor IG(Y;A,B)",
        "identified-pair joint minus marginal sum",
        "modular-sum joint minus marginal sum",
    ]
    assert all(r.holds for r in rows)
    # the two inputs of the exclusive-or are individually uninformative
    assert rows[0].value == 0.0
    assert rows[1].value == 0.0
    # the pair determines the output: exactly one bit, float-exact
    assert rows[2].value == 1.0
    # additivity premise holds with equality for the identified pair
    assert abs(rows[3].value) < 1e-12
    # and fails strictly for the modular sum
    assert rows[4].value > 1e-6


def test_xor_marginals_from_first_principles():
    xor3 = np.zeros((2, 2, 2), dtype=np.int64)
    for a in (0, 1):
        for b in (0, 1):
            xor3[a ^ b, a, b] = 1
    assert info_gain(xor3.sum(axis=2)) == 0.0
    assert info_gain_joint(xor3) == 1.0


# ---------------------------------------------------------------------------
# distance-vs-dependence table


def planted_copy_images(n=200, side=10, seed=0):
    rng = np.random.default_rng(seed)
    imgs = (rng.integers(0, 2, size=(n, side, side)) * 255).astype(np.uint8)
    imgs[:, 5, 6] = imgs[:, 5, 5]  # perfect dependence one step away
    return imgs, np.zeros(n, dtype=np.uint8)


def test_distance_table_finds_planted_neighbor():
    imgs, labels = planted_copy_images()
    rows = distance_dependence_table(imgs, labels, per_class=200, reference=(5, 5), seed=1)
    assert rows[0].distance == 1.0
    assert rows[0].max_abs_pearson >= 1.0 - 1e-9
    ref_bits = (imgs[:, 5, 5] >= 128).astype(np.int64)
    np.testing.assert_allclose(rows[0].max_mi_bits, entropy(np.bincount(ref_bits)))
    assert not rows[0].flagged
    # distances come out sorted and unique
    dists = [r.distance for r in rows]
    assert dists == sorted(dists) and len(set(dists)) == len(dists)
    # far pixels are independent noise
    assert rows[-1].max_abs_pearson < 0.5


def test_distance_table_flags_constant_reference():
    imgs = np.zeros((50, 8, 8), dtype=np.uint8)
    labels = np.zeros(50, dtype=np.uint8)
    rows = distance_dependence_table(imgs, labels, per_class=50, reference=(4, 4))
    assert all(r.flagged for r in rows)
    assert all(r.max_abs_pearson == 0.0 and r.max_mi_bits == 0.0 for r in rows)


def test_distance_table_csv_format():
    imgs, labels = planted_copy_images(n=40)
    rows = distance_dependence_table(imgs, labels, per_class=40)
    text = distance_table_csv(rows)
    lines = text.strip().splitlines()
    assert lines[0] == "distance,max_abs_pearson,max_mi_bits,flagged"
    assert len(lines) == len(rows) + 1
    first = lines[1].split(",")
    assert float(first[0]) == rows[0].distance
    assert first[3] in ("0", "1")


# ---------------------------------------------------------------------------
# correlation-pattern recovery


def test_pixel_correlation_pattern_finds_planted_pair():
    rng = np.random.default_rng(2)
    imgs = rng.integers(0, 256, size=(300, 3, 3)).astype(np.uint8)
    flat = imgs.reshape(300, 9)
    flat[:, 5] = flat[:, 0]  # pixels 0 and 5 move together
    imgs = flat.reshape(300, 3, 3)
    pattern = pattern_from_pixel_correlation(imgs, fraction=1 / 36)
    assert pattern.n_pairs == 1
    assert pattern.mask[0, 5] and pattern.mask[5, 0]
    assert not pattern.mask.diagonal().any()
    np.testing.assert_array_equal(pattern.mask, pattern.mask.T)


def test_constant_columns_never_reach_the_top():
    rng = np.random.default_rng(3)
    imgs = rng.integers(0, 256, size=(100, 2, 2)).astype(np.uint8)
    imgs[:, 0, 0] = 7  # constant pixel
    pattern = pattern_from_pixel_correlation(imgs, fraction=0.5)
    assert not pattern.mask[0, :].any()


@pytest.mark.parametrize("fraction,n", [(0.01, 30), (0.1, 30), (1.0, 10), (0.003, 12)])
def test_marked_pair_count_tracks_fraction(fraction, n):
    rng = np.random.default_rng(4)
    imgs = rng.integers(0, 256, size=(50, n, n)).astype(np.uint8)
    pattern = pattern_from_pixel_correlation(imgs, fraction)
    total = (n * n) * (n * n - 1) // 2
    assert pattern.n_pairs == max(1, round(fraction * total))


def test_pattern_fraction_bounds():
    imgs = np.zeros((10, 2, 2), dtype=np.uint8)
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(DataError):
            pattern_from_pixel_correlation(imgs, bad)


def test_self_recall_is_one_and_random_recall_tracks_fraction():
    rng = np.random.default_rng(5)
    truth = pattern_from_pixel_correlation(
        rng.integers(0, 256, size=(60, 8, 8)).astype(np.uint8), 0.1
    )
    assert pattern_recall(truth, truth) == 1.0
    other = pattern_from_pixel_correlation(
        rng.integers(0, 256, size=(60, 8, 8)).astype(np.uint8), 0.1
    )
    # independent noise overlaps at roughly the marking rate
    assert abs(pattern_recall(other, truth) - 0.1) < 0.12


def test_pattern_recall_shape_guard():
    rng = np.random.default_rng(6)
    a = pattern_from_pixel_correlation(rng.integers(0, 256, (20, 2, 2)).astype(np.uint8), 0.5)
    b = pattern_from_pixel_correlation(rng.integers(0, 256, (20, 3, 3)).astype(np.uint8), 0.5)
    with pytest.raises(DataError):
        pattern_recall(a, b)


def test_attention_pattern_recovers_planted_token_pair():
    cfg = AttentionConfig(
        n_features=9, vocab_size=3, embed_size=4, conv_stack=(ConvSpec(4, 4),),
        adaptive_out=3, residual_hidden=4, n_outputs=2, dropout=0.0,
    )
    mdl = build_model(cfg, seed=0)
    emb = mdl.params["embedding"]
    emb.data[...] = 0.0
    emb.data[0] = 3.0
    emb.data[1] = -3.0
    # positions 0 and 1 carry the loud tokens, the rest carry the silent one
    rng = np.random.default_rng(7)
    rows = np.full((8, 9), 2, dtype=np.int64)
    rows[:, :2] = rng.integers(0, 2, size=(8, 2))
    pattern = pattern_from_attention(mdl, rows, fraction=1 / 36, chunk=3)
    assert pattern.n_pairs == 1
    assert pattern.mask[0, 1] and pattern.mask[1, 0]
    np.testing.assert_array_equal(pattern.mask, pattern.mask.T)
    assert not pattern.mask.diagonal().any()


def test_attention_pattern_rejects_other_models():
    mdl = build_model(MlpConfig(4, 3, 2), seed=0)
    with pytest.raises(DataError):
        pattern_from_attention(mdl, np.zeros((2, 4), dtype=np.int64), 0.5)
