"""Diagnostic analyses.

Three tools: (1) Shannon information-gain calculators over empirical count
tables, with a demo reproducing the joint-versus-marginal inequality chain on
constructed distributions; (2) a distance-vs-dependence table showing how
Pearson correlation and mutual information between pixel pairs fall with
spatial distance; (3) recovery of the strongest pixel-pair dependencies from
a trained extractor's attention maps, scored against dependency patterns
computed directly from the data.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError
from .model import AttentionConfig, Model


# ---------------------------------------------------------------------------
# entropy and information gain (base-2, plug-in estimates from counts)


def entropy(counts) -> float:
    """Shannon entropy in bits of the empirical distribution given by counts."""
    c = np.asarray(counts, dtype=np.float64).ravel()
    if c.size == 0 or c.sum() <= 0:
        raise DomainError("entropy needs at least one observation")
    if (c < 0).any():
        raise DomainError("negative counts")
    p = c[c > 0] / c.sum()
    return float(-(p * np.log2(p)).sum())


def conditional_entropy(joint) -> float:
    """H(Y | X) from a joint count table with Y on axis 0 and X on axis 1."""
    j = np.asarray(joint, dtype=np.float64)
    if j.ndim != 2:
        raise DomainError(f"joint table must be 2-d, got {j.shape}")
    total = j.sum()
    if total <= 0:
        raise DomainError("conditional entropy needs at least one observation")
    out = 0.0
    for col in range(j.shape[1]):
        mass = j[:, col].sum()
        if mass > 0:
            out += (mass / total) * entropy(j[:, col])
    return float(out)


def info_gain(joint) -> float:
    """IG(Y; X) = H(Y) - H(Y|X) from a [|Y|, |X|] count table."""
    j = np.asarray(joint, dtype=np.float64)
    return entropy(j.sum(axis=1)) - conditional_entropy(j)


def info_gain_joint(joint3) -> float:
    """IG(Y; A, B) from a [|Y|, |A|, |B|] count table, conditioning on (A, B) jointly."""
    j = np.asarray(joint3, dtype=np.float64)
    if j.ndim != 3:
        raise DomainError(f"need a 3-d count table, got {j.shape}")
    return info_gain(j.reshape(j.shape[0], -1))


def joint_counts(y, x, n_y: int, n_x: int) -> np.ndarray:
    table = np.zeros((n_y, n_x), dtype=np.int64)
    np.add.at(table, (np.asarray(y), np.asarray(x)), 1)
    return table


def mutual_information_bits(a, b) -> float:
    """MI between two binary vectors via their 2x2 joint histogram."""
    av = np.asarray(a, dtype=np.int64)
    bv = np.asarray(b, dtype=np.int64)
    table = np.zeros((2, 2), dtype=np.int64)
    np.add.at(table, (av, bv), 1)
    return info_gain(table)


@dataclass(frozen=True)
class GainDemoRow:
    name: str
    value: float
    expectation: str
    holds: bool


def info_gain_demo() -> list[GainDemoRow]:
    """Constructed distributions exercising the joint-information inequalities.

    Exclusive-or: each input alone carries zero bits about the output, the
    pair carries one full bit, so joint conditioning strictly beats the sum
    of marginal gains. Identified pair (Y = (A, B), A independent of B): the
    additivity premise holds with equality. Modular sum: the premise fails
    and the marginal-sum bound is strict.
    """
    rows: list[GainDemoRow] = []

    # exclusive-or over uniform independent bits: counts indexed [y, a, b]
    xor3 = np.zeros((2, 2, 2), dtype=np.int64)
    for a in (0, 1):
        for b in (0, 1):
            xor3[a ^ b, a, b] = 25
    ig_a = info_gain(xor3.sum(axis=2))
    ig_b = info_gain(xor3.sum(axis=1))
    ig_ab = info_gain_joint(xor3)
    rows.append(GainDemoRow("xor IG(Y;A)", ig_a, "== 0", ig_a == 0.0))
    rows.append(GainDemoRow("xor IG(Y;B)", ig_b, "== 0", ig_b == 0.0))
    rows.append(GainDemoRow("xor IG(Y;A,B)", ig_ab, "== 1", ig_ab == 1.0))

    # Y enumerates the pair (A, B) with A and B independent and non-uniform:
    # H(Y|A,B) = H(Y|A) + H(Y|B) - H(Y) holds (all are zero given the pair),
    # so joint gain equals the marginal sum exactly.
    pa = np.array([2, 3, 5], dtype=np.int64)
    pb = np.array([1, 4], dtype=np.int64)
    ident = np.zeros((6, 3, 2), dtype=np.int64)
    for a in range(3):
        for b in range(2):
            ident[a * 2 + b, a, b] = pa[a] * pb[b]
    lhs = info_gain_joint(ident)
    rhs = info_gain(ident.sum(axis=2)) + info_gain(ident.sum(axis=1))
    rows.append(
        GainDemoRow(
            "identified-pair joint minus marginal sum",
            lhs - rhs,
            "== 0 (premise holds)",
            abs(lhs - rhs) < 1e-12,
        )
    )

    # modular sum y = (a + b) mod 3 with non-uniform inputs: premise fails,
    # joint gain strictly exceeds the marginal sum.
    pa3 = np.array([1, 2, 3], dtype=np.int64)
    pb3 = np.array([4, 5, 6], dtype=np.int64)
    mod3 = np.zeros((3, 3, 3), dtype=np.int64)
    for a in range(3):
        for b in range(3):
            mod3[(a + b) % 3, a, b] = pa3[a] * pb3[b]
    lhs3 = info_gain_joint(mod3)
    rhs3 = info_gain(mod3.sum(axis=2)) + info_gain(mod3.sum(axis=1))
    rows.append(
        GainDemoRow(
            "modular-sum joint minus marginal sum",
            lhs3 - rhs3,
            "> 0 (premise fails)",
            lhs3 - rhs3 > 1e-6,
        )
    )
    return rows


# ---------------------------------------------------------------------------
# distance versus dependence


@dataclass
class DistanceRow:
    distance: float
    max_abs_pearson: float
    max_mi_bits: float
    flagged: bool


def distance_dependence_table(
    images: np.ndarray,
    labels: np.ndarray,
    per_class: int = 20,
    reference: tuple[int, int] = (5, 5),
    threshold: float = 128.0,
    seed: int = 0,
) -> list[DistanceRow]:
    """Max dependence between a reference pixel and all others, by distance.

    Samples per_class images per label, binarizes at the threshold, and uses
    the binarized columns for both Pearson and mutual information
    (one input, two dependence measures). A zero-variance reference yields
    flagged rows rather than a failure.
    """
    rng = np.random.default_rng(seed)
    picks = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        k = min(per_class, members.size)
        picks.append(rng.choice(members, size=k, replace=False))
    sel = np.concatenate(picks)
    side = images.shape[1]
    binary = (images[sel].reshape(sel.size, -1) >= threshold).astype(np.float64)
    ref_flat = reference[0] * side + reference[1]
    ref = binary[:, ref_flat]
    ref_var = ref.var()

    rows_by_distance: dict[float, DistanceRow] = {}
    for flat in range(side * side):
        if flat == ref_flat:
            continue
        r, c = divmod(flat, side)
        dist = round(float(np.hypot(r - reference[0], c - reference[1])), 9)
        col = binary[:, flat]
        flagged = False
        if ref_var == 0.0 or col.var() == 0.0:
            pearson, mi = 0.0, 0.0
            flagged = ref_var == 0.0
        else:
            pearson = float(np.corrcoef(ref, col)[0, 1])
            mi = mutual_information_bits(ref.astype(np.int64), col.astype(np.int64))
        row = rows_by_distance.get(dist)
        if row is None:
            rows_by_distance[dist] = DistanceRow(dist, abs(pearson), mi, flagged)
        else:
            row.max_abs_pearson = max(row.max_abs_pearson, abs(pearson))
            row.max_mi_bits = max(row.max_mi_bits, mi)
            row.flagged = row.flagged or flagged
    return [rows_by_distance[d] for d in sorted(rows_by_distance)]


def distance_table_csv(rows: list[DistanceRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["distance", "max_abs_pearson", "max_mi_bits", "flagged"])
    for row in rows:
        writer.writerow(
            [f"{row.distance:.6f}", f"{row.max_abs_pearson:.6f}", f"{row.max_mi_bits:.6f}",
             int(row.flagged)]
        )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# correlation-pattern recovery


@dataclass(frozen=True)
class CorrelationPattern:
    """Symmetric boolean mask marking the strongest off-diagonal pairs."""

    mask: np.ndarray  # [N, N] bool, symmetric, zero diagonal
    fraction: float

    @property
    def n_pairs(self) -> int:
        return int(self.mask.sum() // 2)


def _top_fraction_pattern(scores: np.ndarray, fraction: float) -> CorrelationPattern:
    """Mark the top fraction of unordered off-diagonal pairs by score."""
    n = scores.shape[0]
    if scores.shape != (n, n):
        raise DataError(f"score matrix must be square, got {scores.shape}")
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"fraction must be in (0, 1], got {fraction}")
    iu = np.triu_indices(n, k=1)
    vals = scores[iu]
    keep = max(1, round(fraction * vals.size))
    order = np.argpartition(-vals, keep - 1)[:keep]
    mask = np.zeros((n, n), dtype=bool)
    mask[iu[0][order], iu[1][order]] = True
    mask |= mask.T
    return CorrelationPattern(mask, fraction)


def pattern_from_pixel_correlation(images: np.ndarray, fraction: float) -> CorrelationPattern:
    """Ground truth: top |Pearson r| pairs over raw pixel columns.

    Constant columns have undefined correlation; they score 0 and never reach
    the top fraction.
    """
    x = images.reshape(images.shape[0], -1).astype(np.float64)
    x -= x.mean(axis=0)
    std = x.std(axis=0)
    safe = np.where(std == 0.0, 1.0, std)
    x /= safe
    corr = (x.T @ x) / x.shape[0]
    corr[std == 0.0, :] = 0.0
    corr[:, std == 0.0] = 0.0
    np.fill_diagonal(corr, 0.0)
    return _top_fraction_pattern(np.abs(corr), fraction)


def pattern_from_attention(mdl: Model, token_rows: np.ndarray, fraction: float,
                           chunk: int = 16) -> CorrelationPattern:
    """Average |attention| over samples, then mark the top fraction of pairs."""
    if not isinstance(mdl.config, AttentionConfig):
        raise DataError("attention patterns need the attention extractor")
    n = mdl.config.n_features
    acc = np.zeros((n, n), dtype=np.float64)
    total = 0
    for start in range(0, token_rows.shape[0], chunk):
        piece = token_rows[start:start + chunk]
        _, internals = mdl.forward_batch(piece, training=False, want_internals=True)
        acc += np.abs(internals["attention"].data.astype(np.float64)).sum(axis=0)
        total += piece.shape[0]
    acc /= total
    np.fill_diagonal(acc, 0.0)
    return _top_fraction_pattern(acc, fraction)


def pattern_recall(recovered: CorrelationPattern, truth: CorrelationPattern) -> float:
    """|recovered AND true| / |true| over unordered pairs."""
    if recovered.mask.shape != truth.mask.shape:
        raise DataError("patterns cover different numbers of features")
    hit = int((recovered.mask & truth.mask).sum() // 2)
    return hit / truth.n_pairs
