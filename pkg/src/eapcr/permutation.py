"""Index permutations used to break fixed spatial layouts.

A PermutationSpec wraps the map sigma, where sigma[i] is the new position of
element i, together with a provenance tag so runs can be replayed. The
designed map writes 0..n-1 row-major into an R x L grid and reads the
transpose, which sends neighbours far apart; a random map with a recorded
seed is the ablation counterpart.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError


def _grid_shape(n: int) -> tuple[int, int]:
    """Divisor pair R <= L minimizing L - R; ties prefer the smaller R."""
    best = (1, n)
    for r in range(1, int(np.sqrt(n)) + 1):
        if n % r == 0:
            best = (r, n // r)  # r grows, so the last hit minimizes the gap
    return best


@dataclass(frozen=True)
class PermutationSpec:
    """sigma[i] = destination of element i; provenance records how it was made."""

    sigma: np.ndarray
    provenance: str
    n: int = field(init=False)

    def __post_init__(self):
        sig = np.asarray(self.sigma, dtype=np.int64)
        object.__setattr__(self, "sigma", sig)
        object.__setattr__(self, "n", int(sig.shape[0]))
        if sorted(sig.tolist()) != list(range(self.n)):
            raise DomainError(f"not a permutation of 0..{self.n - 1}")

    def inverse(self) -> "PermutationSpec":
        inv = np.empty(self.n, dtype=np.int64)
        inv[self.sigma] = np.arange(self.n)
        return PermutationSpec(inv, f"inverse({self.provenance})")

    def compose(self, other: "PermutationSpec") -> "PermutationSpec":
        """Apply other first, then self."""
        if self.n != other.n:
            raise DimensionError(f"compose sizes differ: {self.n} vs {other.n}")
        return PermutationSpec(
            self.sigma[other.sigma], f"compose({self.provenance},{other.provenance})"
        )

    def as_matrix(self) -> np.ndarray:
        """0/1 matrix M with M[sigma(i), i] = 1, so M x reorders a vector."""
        m = np.zeros((self.n, self.n), dtype=np.float64)
        m[self.sigma, np.arange(self.n)] = 1.0
        return m

    def to_dict(self) -> dict:
        return {"provenance": self.provenance, "sigma": self.sigma.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "PermutationSpec":
        return PermutationSpec(np.asarray(d["sigma"], dtype=np.int64), d["provenance"])


def identity_permutation(n: int) -> PermutationSpec:
    if n < 1:
        raise DomainError(f"permutation size must be positive, got {n}")
    return PermutationSpec(np.arange(n, dtype=np.int64), "identity")


def designed_permutation(n: int) -> PermutationSpec:
    """Grid-transpose permutation.

    Exact grids: element at row-major cell (r, c) of the R x L grid moves to
    row-major position (c, r) of the transposed L x R grid: sigma(i) = c*R + r.
    Primes (and any n whose best divisor pair is 1 x n) use the near-square
    R = floor(sqrt(n)), L = ceil(n / R) grid with the last cells left empty;
    the readout walks columns top to bottom, skipping the padding.
    """
    if n < 1:
        raise DomainError(f"permutation size must be positive, got {n}")
    r_, l_ = _grid_shape(n)
    if r_ == 1 and n > 1:
        r_ = int(np.sqrt(n))
        l_ = -(-n // r_)
    if r_ * l_ == n:
        i = np.arange(n, dtype=np.int64)
        sigma = (i % l_) * r_ + i // l_
    else:
        order = []
        for c in range(l_):
            for r in range(r_):
                i = r * l_ + c
                if i < n:
                    order.append(i)  # order[p] = element read p-th
        sigma = np.empty(n, dtype=np.int64)
        sigma[np.asarray(order)] = np.arange(n)
    return PermutationSpec(sigma, f"designed{{R={r_},L={l_}}}")


def random_permutation(n: int, seed: int) -> PermutationSpec:
    if n < 1:
        raise DomainError(f"permutation size must be positive, got {n}")
    rng = np.random.default_rng(seed)
    return PermutationSpec(rng.permutation(n).astype(np.int64), f"random{{seed={seed}}}")


def min_adjacent_separation(spec: PermutationSpec) -> int:
    """min over consecutive i of |sigma(i+1) - sigma(i)|; gauges neighbour scatter."""
    if spec.n < 2:
        raise DomainError("adjacent separation needs at least two elements")
    return int(np.abs(np.diff(spec.sigma)).min())


def permute_vector(spec: PermutationSpec, values: np.ndarray) -> np.ndarray:
    """out[sigma(i)] = values[i] along the first axis."""
    v = np.asarray(values)
    if v.shape[0] != spec.n:
        raise DimensionError(f"vector of {v.shape[0]} vs permutation of {spec.n}")
    out = np.empty_like(v)
    out[spec.sigma] = v
    return out
