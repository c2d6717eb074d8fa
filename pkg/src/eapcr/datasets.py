"""Dataset loading, synthesis, and splitting.

Image sets use the classic IDX binary layout (big-endian headers, magic
0x00000803 for image tensors and 0x00000801 for label vectors). The
synthesizer applies a designed permutation to rows and columns of every
image, which destroys the fixed spatial layout while keeping each image's
pixel multiset intact; synthesized sets can be written back to IDX so other
tools can consume them.

Tabular sets are plain CSV with a header row; a FeatureSchema names the
columns that matter.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, replace

import numpy as np

from .encoding import FeatureSchema
from .errors import DataError, FormatError, SchemaError
from .permutation import PermutationSpec, designed_permutation

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass
class ImageDataset:
    images: np.ndarray  # [n, side, side] uint8
    labels: np.ndarray  # [n] uint8
    name: str = "images"

    def __post_init__(self):
        if self.images.ndim != 3 or self.images.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"images {self.images.shape} vs labels {self.labels.shape}"
            )

    def __len__(self):
        return self.images.shape[0]


@dataclass
class TabularDataset:
    rows: list  # raw feature cells, schema order
    targets: np.ndarray  # int64 class ids or float64 values
    schema: FeatureSchema
    name: str = "table"

    def __len__(self):
        return len(self.rows)


# ---------------------------------------------------------------------------
# IDX binary I/O


def _read_exact(fh, count: int, path) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise OSError(f"{path}: truncated file, wanted {count} bytes, got {len(buf)}")
    return buf


def read_idx_images(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, path))
        if magic != IMAGE_MAGIC:
            raise FormatError(f"{path}: bad image magic 0x{magic:08x}")
        data = _read_exact(fh, count * rows * cols, path)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {count} images")
    return np.frombuffer(data, dtype=np.uint8).reshape(count, rows, cols).copy()


def read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, count = struct.unpack(">II", _read_exact(fh, 8, path))
        if magic != LABEL_MAGIC:
            raise FormatError(f"{path}: bad label magic 0x{magic:08x}")
        data = _read_exact(fh, count, path)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {count} labels")
    return np.frombuffer(data, dtype=np.uint8).copy()


def write_idx_images(path, images: np.ndarray) -> None:
    imgs = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = imgs.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        fh.write(imgs.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    lab = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, lab.shape[0]))
        fh.write(lab.tobytes())


def load_image_dataset(images_path, labels_path, side: int = 28, name: str = "images") -> ImageDataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[1:] != (side, side):
        raise FormatError(f"{images_path}: expected {side}x{side} images, got {images.shape[1:]}")
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"image count {images.shape[0]} does not match label count {labels.shape[0]}"
        )
    if (labels >= 10).any():
        raise FormatError(f"{labels_path}: labels outside [0, 10)")
    return ImageDataset(images, labels, name)


# ---------------------------------------------------------------------------
# synthesis


def scramble_images(images: np.ndarray, perm: PermutationSpec | None = None) -> np.ndarray:
    """out[sigma(r), sigma(c)] = img[r, c] for every image; pixel multiset kept."""
    imgs = np.asarray(images)
    side = imgs.shape[1]
    if imgs.shape[2] != side:
        raise DataError(f"scramble needs square images, got {imgs.shape[1:]}")
    if perm is None:
        perm = designed_permutation(side)
    if perm.n != side:
        raise DataError(f"permutation of {perm.n} vs image side {side}")
    out = np.empty_like(imgs)
    out[:, perm.sigma[:, None], perm.sigma[None, :]] = imgs
    return out


def synthesize_scrambled(ds: ImageDataset, perm: PermutationSpec | None = None) -> ImageDataset:
    return replace(ds, images=scramble_images(ds.images, perm), name=f"{ds.name}-scrambled")


# ---------------------------------------------------------------------------
# tabular CSV


def load_tabular(path, schema: FeatureSchema, name: str | None = None) -> TabularDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        positions = {}
        for col in [f.name for f in schema.features] + [schema.target.name]:
            if col not in header:
                raise SchemaError(f"{path}: column {col!r} not in header {header}")
            positions[col] = header.index(col)
        rows, targets = [], []
        for r, rec in enumerate(reader):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {r + 2} has {len(rec)} cells, header has {len(header)}")
            rows.append([rec[positions[f.name]].strip() for f in schema.features])
            targets.append(rec[positions[schema.target.name]].strip())
    if not rows:
        raise DataError(f"{path}: no data rows")
    if schema.target.kind == "class":
        try:
            y = np.array([int(float(t)) for t in targets], dtype=np.int64)
        except ValueError as e:
            raise DataError(f"{path}: unparseable class target: {e}") from None
        if schema.target.binarize_positive:
            y = (y > 0).astype(np.int64)
        if (y < 0).any():
            raise DataError(f"{path}: negative class id in target column")
    else:
        try:
            y = np.array([float(t) for t in targets], dtype=np.float64)
        except ValueError as e:
            raise DataError(f"{path}: unparseable numeric target: {e}") from None
        if not np.isfinite(y).all():
            raise DataError(f"{path}: non-finite value in target column")
    return TabularDataset(rows, y, schema, name or str(path))


# ---------------------------------------------------------------------------
# splitting and subsetting


def _take_image(ds: ImageDataset, idx: np.ndarray) -> ImageDataset:
    return replace(ds, images=ds.images[idx], labels=ds.labels[idx])


def _take_tabular(ds: TabularDataset, idx: np.ndarray) -> TabularDataset:
    return replace(ds, rows=[ds.rows[i] for i in idx], targets=ds.targets[idx])


def _labels_of(ds) -> np.ndarray:
    return ds.labels if isinstance(ds, ImageDataset) else ds.targets


def take(ds, idx: np.ndarray):
    return _take_image(ds, idx) if isinstance(ds, ImageDataset) else _take_tabular(ds, idx)


def split(ds, train_fraction: float, seed: int, stratified: bool = False):
    """Shuffled two-way split; stratification keeps class ratios and needs
    at least two members per class."""
    n = len(ds)
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    if not stratified:
        order = rng.permutation(n)
        cut = int(round(train_fraction * n))
        return take(ds, order[:cut]), take(ds, order[cut:])
    y = _labels_of(ds)
    if not np.issubdtype(y.dtype, np.integer):
        raise DataError("stratified split needs integer class targets")
    train_idx, test_idx = [], []
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        if members.size < 2:
            raise DataError(f"class {cls} has {members.size} member(s); cannot stratify")
        members = members[rng.permutation(members.size)]
        cut = int(round(train_fraction * members.size))
        cut = min(max(cut, 1), members.size - 1)  # both sides see every class
        train_idx.append(members[:cut])
        test_idx.append(members[cut:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return take(ds, train_idx), take(ds, test_idx)


def draw_disjoint_subsets(ds, n_train: int, n_test: int, seed: int):
    """Two disjoint random subsets of one pool (benchmark protocol draws both
    train and eval slices from a single source file)."""
    n = len(ds)
    if n_train + n_test > n:
        raise DataError(f"asked for {n_train}+{n_test} samples from a pool of {n}")
    order = np.random.default_rng(seed).permutation(n)
    return take(ds, order[:n_train]), take(ds, order[n_train:n_train + n_test])
