"""Feature schemas, discretization, and token dictionaries.

Raw rows (categorical strings, numeric values) become integer token vectors.
Numeric features may pass through binning: explicit thresholds split the line
into half-open cells [t_k, t_k+1), and quantile binning resolves thresholds
from the training column once, then applies the same map forever after.

Dictionaries come in two modes. Per-feature keeps every feature's tokens in
its own dense index block, UNK last per block, so distinct features never
share an index. Shared-vocabulary maps equal category labels of all features
to one index; it suits closed bin universes (a binarized image needs exactly
two tokens) and therefore reserves no UNK row; an unseen label in shared mode
falls back to index 0.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, SchemaError

UNK = "<unk>"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str  # "categorical" | "numeric"
    thresholds: tuple[float, ...] | None = None  # explicit bin edges
    quantile_bins: int | None = None  # resolve edges from training data

    def __post_init__(self):
        if self.kind not in ("categorical", "numeric"):
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical" and (self.thresholds or self.quantile_bins):
            raise SchemaError(f"feature {self.name!r}: categorical features take no binning")
        if self.thresholds is not None and self.quantile_bins is not None:
            raise SchemaError(f"feature {self.name!r}: pick one binning, not both")
        if self.thresholds is not None and list(self.thresholds) != sorted(self.thresholds):
            raise SchemaError(f"feature {self.name!r}: thresholds must be sorted")
        if self.quantile_bins is not None and self.quantile_bins < 2:
            raise SchemaError(f"feature {self.name!r}: quantile binning needs >= 2 bins")


@dataclass(frozen=True)
class TargetSpec:
    name: str
    kind: str  # "class" | "real"
    binarize_positive: bool = False  # collapse >0 to 1 at load time

    def __post_init__(self):
        if self.kind not in ("class", "real"):
            raise SchemaError(f"target {self.name!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[FeatureSpec, ...]
    target: TargetSpec

    @property
    def n_features(self) -> int:
        return len(self.features)

    def to_dict(self) -> dict:
        feats = []
        for f in self.features:
            if f.thresholds is not None:
                binning = {"thresholds": list(f.thresholds)}
            elif f.quantile_bins is not None:
                binning = {"quantile": f.quantile_bins}
            else:
                binning = None
            feats.append({"name": f.name, "kind": f.kind, "binning": binning})
        return {
            "features": feats,
            "target": {
                "name": self.target.name,
                "kind": self.target.kind,
                "binarize_positive": self.target.binarize_positive,
            },
        }

    @staticmethod
    def from_dict(d: dict) -> "FeatureSchema":
        try:
            feats = []
            for f in d["features"]:
                binning = f.get("binning")
                thresholds = None
                quantile = None
                if binning:
                    if "thresholds" in binning:
                        thresholds = tuple(float(t) for t in binning["thresholds"])
                    elif "quantile" in binning:
                        quantile = int(binning["quantile"])
                    else:
                        raise SchemaError(f"feature {f['name']!r}: unknown binning {binning!r}")
                feats.append(FeatureSpec(f["name"], f["kind"], thresholds, quantile))
            t = d["target"]
            target = TargetSpec(t["name"], t["kind"], bool(t.get("binarize_positive", False)))
        except KeyError as e:
            raise SchemaError(f"schema is missing key {e}") from e
        return FeatureSchema(tuple(feats), target)

    @staticmethod
    def from_json(text: str) -> "FeatureSchema":
        return FeatureSchema.from_dict(json.loads(text))


def discretize(value: float, thresholds: tuple[float, ...]) -> str:
    """Map a number to 'bin_k' via half-open cells; value >= t_k lands past it."""
    v = float(value)
    if math.isnan(v):
        raise DataError("cannot discretize NaN")
    k = int(np.searchsorted(np.asarray(thresholds, dtype=np.float64), v, side="right"))
    return f"bin_{k}"


def _cell_category(spec: FeatureSpec, cell, resolved: tuple[float, ...] | None,
                   where: str) -> str:
    if spec.kind == "categorical":
        return str(cell).strip()
    try:
        v = float(cell)
    except (TypeError, ValueError):
        raise DataError(f"unparseable numeric cell {cell!r} at {where}") from None
    if math.isnan(v):
        raise DataError(f"NaN numeric cell at {where}")
    if resolved is None:
        # numeric feature without binning: its literal value is the category
        return repr(v)
    return discretize(v, resolved)


@dataclass
class FeatureDictionary:
    """Token index assignment plus the resolved binning it was built with."""

    mode: str  # "per-feature" | "shared"
    schema: FeatureSchema
    entries: dict  # per-feature: (feature_pos, category) -> index; shared: category -> index
    unk_index: tuple[int, ...] | None  # per feature, only in per-feature mode
    resolved_thresholds: tuple  # per feature: tuple of edges or None
    vocab_size: int = field(init=False)

    def __post_init__(self):
        self.vocab_size = len(self.entries) + (len(self.unk_index) if self.unk_index else 0)

    def index_of(self, feature_pos: int, category: str) -> int:
        if self.mode == "per-feature":
            idx = self.entries.get((feature_pos, category))
            if idx is None:
                return self.unk_index[feature_pos]
            return idx
        return self.entries.get(category, 0)

    def category_of(self, index: int) -> tuple:
        """Reverse lookup; returns (feature_pos, category) or (None, category)."""
        if self.mode == "per-feature":
            if self.unk_index and index in self.unk_index:
                return (self.unk_index.index(index), UNK)
            for key, idx in self.entries.items():
                if idx == index:
                    return key
        else:
            for cat, idx in self.entries.items():
                if idx == index:
                    return (None, cat)
        raise DataError(f"index {index} not in dictionary")

    def to_json(self) -> str:
        if self.mode == "per-feature":
            ent = [[pos, cat, idx] for (pos, cat), idx in self.entries.items()]
        else:
            ent = [[cat, idx] for cat, idx in self.entries.items()]
        return json.dumps(
            {
                "mode": self.mode,
                "schema": self.schema.to_dict(),
                "entries": ent,
                "unk_index": list(self.unk_index) if self.unk_index else None,
                "resolved_thresholds": [
                    list(t) if t is not None else None for t in self.resolved_thresholds
                ],
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "FeatureDictionary":
        d = json.loads(text)
        schema = FeatureSchema.from_dict(d["schema"])
        if d["mode"] == "per-feature":
            entries = {(int(p), c): int(i) for p, c, i in d["entries"]}
        else:
            entries = {c: int(i) for c, i in d["entries"]}
        return FeatureDictionary(
            mode=d["mode"],
            schema=schema,
            entries=entries,
            unk_index=tuple(d["unk_index"]) if d["unk_index"] else None,
            resolved_thresholds=tuple(
                tuple(t) if t is not None else None for t in d["resolved_thresholds"]
            ),
        )

    def sha256(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def _resolve_thresholds(rows, schema: FeatureSchema) -> tuple:
    resolved = []
    for pos, spec in enumerate(schema.features):
        if spec.thresholds is not None:
            resolved.append(tuple(float(t) for t in spec.thresholds))
        elif spec.quantile_bins is not None:
            col = []
            for r, row in enumerate(rows):
                try:
                    col.append(float(row[pos]))
                except (TypeError, ValueError):
                    raise DataError(
                        f"unparseable numeric cell {row[pos]!r} at row {r}, column {spec.name!r}"
                    ) from None
            k = spec.quantile_bins
            qs = np.quantile(np.asarray(col, dtype=np.float64), [i / k for i in range(1, k)])
            resolved.append(tuple(float(q) for q in qs))
        else:
            resolved.append(None)
    return tuple(resolved)


def build_dictionary(rows, schema: FeatureSchema, mode: str = "per-feature") -> FeatureDictionary:
    """Scan training rows once and assign dense indices deterministically.

    Features are visited in schema order, categories indexed in first-
    appearance order. Per-feature mode lays out one block per feature with its
    UNK appended last; shared mode interleaves all features into one table.
    """
    if mode not in ("per-feature", "shared"):
        raise SchemaError(f"unknown dictionary mode {mode!r}")
    rows = list(rows)
    if not rows:
        raise DataError("cannot build a dictionary from an empty dataset")
    n = schema.n_features
    for r, row in enumerate(rows):
        if len(row) != n:
            raise DataError(f"row {r} has {len(row)} cells, schema declares {n}")
    resolved = _resolve_thresholds(rows, schema)

    if mode == "shared":
        entries: dict = {}
        for r, row in enumerate(rows):
            for pos, spec in enumerate(schema.features):
                cat = _cell_category(spec, row[pos], resolved[pos], f"row {r}, column {spec.name!r}")
                if cat not in entries:
                    entries[cat] = len(entries)
        return FeatureDictionary("shared", schema, entries, None, resolved)

    per_feature: list[dict] = [{} for _ in range(n)]
    for r, row in enumerate(rows):
        for pos, spec in enumerate(schema.features):
            cat = _cell_category(spec, row[pos], resolved[pos], f"row {r}, column {spec.name!r}")
            if cat not in per_feature[pos]:
                per_feature[pos][cat] = len(per_feature[pos])
    entries = {}
    unk = []
    base = 0
    for pos in range(n):
        for cat, local in per_feature[pos].items():
            entries[(pos, cat)] = base + local
        base += len(per_feature[pos])
        unk.append(base)
        base += 1
    return FeatureDictionary("per-feature", schema, entries, tuple(unk), resolved)


def encode(row, dictionary: FeatureDictionary) -> np.ndarray:
    """Token indices for one raw row, in schema feature order."""
    schema = dictionary.schema
    if len(row) != schema.n_features:
        raise DataError(f"row has {len(row)} cells, schema declares {schema.n_features}")
    out = np.empty(schema.n_features, dtype=np.int32)
    for pos, spec in enumerate(schema.features):
        cat = _cell_category(spec, row[pos], dictionary.resolved_thresholds[pos],
                             f"column {spec.name!r}")
        out[pos] = dictionary.index_of(pos, cat)
    return out


def encode_rows(rows, dictionary: FeatureDictionary) -> np.ndarray:
    return np.stack([encode(row, dictionary) for row in rows])


# ---------------------------------------------------------------------------
# image fast path


def image_schema(side: int = 28, threshold: float = 128.0) -> FeatureSchema:
    feats = tuple(
        FeatureSpec(f"pixel_{i}", "numeric", thresholds=(threshold,)) for i in range(side * side)
    )
    return FeatureSchema(feats, TargetSpec("digit", "class"))


def image_dictionary(side: int = 28, threshold: float = 128.0) -> FeatureDictionary:
    """Shared two-token dictionary for threshold-binarized images.

    Equals what build_dictionary produces on any image set whose first pixel
    falls below the threshold (bin_0 then appears first); constructed
    explicitly so it never depends on the data order.
    """
    schema = image_schema(side, threshold)
    resolved = tuple((float(threshold),) for _ in range(side * side))
    return FeatureDictionary("shared", schema, {"bin_0": 0, "bin_1": 1}, None, resolved)


def encode_images(images: np.ndarray, threshold: float = 128.0) -> np.ndarray:
    """Vectorized encode() for stacks of images: [n, H, W] uint8 -> [n, H*W] int32."""
    x = np.asarray(images)
    return (x >= threshold).astype(np.int32).reshape(x.shape[0], -1)
