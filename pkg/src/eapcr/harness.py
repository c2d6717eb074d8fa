"""Training loop, evaluation, and experiment orchestration.

A run is: prepare a DataBundle per split, build a model, train with Adam or
plain SGD, evaluate after every epoch, and leave behind a RunRecord (JSON)
plus a checkpoint. Optimizer batches are processed in fixed micro-chunks
whose losses are weighted by chunk size, so gradients equal the monolithic
batch up to float summation order while peak memory stays bounded; the chunk
size is part of the config, which keeps runs bit-reproducible.

Seeding: one master seed spawns independent streams for model init, data
subsetting, shuffling, and dropout, so configs that share a seed share every
random decision.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import model as model_lib
from .autodiff import Tape, backward
from .datasets import (
    ImageDataset,
    draw_disjoint_subsets,
    load_image_dataset,
    load_tabular,
    split,
    synthesize_scrambled,
)
from .encoding import (
    FeatureSchema,
    build_dictionary,
    encode_images,
    encode_rows,
    image_dictionary,
)
from .errors import ConfigError, DataError, DivergenceError
from .metrics import classification_metrics, regression_metrics
from .model import Model, build_model, config_from_dict, config_to_dict, param_count
from .ops import mse_loss, reshape, softmax_cross_entropy
from .optim import make_optimizer, zero_grads


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 0.003
    optimizer: str = "adam"
    micro_batch: int = 8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.micro_batch < 1:
            raise ConfigError("epochs, batch size, and micro batch must be positive")

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        known = {f for f in TrainConfig.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown train-config keys: {sorted(extra)}")
        return TrainConfig(**d)


@dataclass
class DataBundle:
    """Model-ready arrays for one split."""

    inputs: np.ndarray
    loss_targets: np.ndarray  # what the loss sees (standardized for regression)
    eval_targets: np.ndarray  # what the metrics see (original scale)
    task: str
    n_classes: int | None = None
    target_stats: tuple[float, float] | None = None  # (mean, std) when standardized

    def __len__(self):
        return self.inputs.shape[0]


@dataclass
class RunRecord:
    name: str
    seed: int
    reproducible: bool
    config: dict
    param_count: int
    epochs: list = field(default_factory=list)  # {"epoch", "train_loss", "metric"}
    best: dict | None = None
    final: dict | None = None
    wall_time_s: float = 0.0
    divergence: str | None = None
    artifacts: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "RunRecord":
        return RunRecord(**json.loads(text))

    def replay_digest(self) -> str:
        """Hash of everything a replay must reproduce (times and paths excluded)."""
        core = {
            "seed": self.seed,
            "config": self.config,
            "epochs": self.epochs,
            "best": self.best,
            "final": self.final,
            "divergence": self.divergence,
        }
        return hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()


def evaluate(mdl: Model, bundle: DataBundle, chunk: int = 32):
    """Metrics on a bundle; dropout is always off here."""
    preds = []
    for start in range(0, len(bundle), chunk):
        preds.append(mdl.predict(bundle.inputs[start:start + chunk]))
    pred = np.concatenate(preds)
    if bundle.task == "classification":
        return classification_metrics(bundle.eval_targets, pred, bundle.n_classes)
    if bundle.target_stats is not None:
        mean, std = bundle.target_stats
        pred = pred * std + mean
    return regression_metrics(bundle.eval_targets, pred.astype(np.float64))


def train_model(
    mdl: Model,
    train_bundle: DataBundle,
    test_bundle: DataBundle,
    cfg: TrainConfig,
    seed: int,
    record: RunRecord,
    verbose: bool = False,
) -> RunRecord:
    """Run the optimization; fills the record's epochs/best/final in place.

    Raises DivergenceError (with the partial record attached) on non-finite
    loss.
    """
    params = mdl.parameters()
    optimizer = make_optimizer(cfg.optimizer, cfg.lr)
    shuffle_rng, dropout_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)
    )
    n = len(train_bundle)
    started = time.perf_counter()
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        loss_sum, seen = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            zero_grads(params)
            batch_loss = 0.0
            for mstart in range(0, batch.size, cfg.micro_batch):
                piece = batch[mstart:mstart + cfg.micro_batch]
                weight = piece.size / batch.size
                tape = Tape()
                logits = mdl.forward_batch(
                    train_bundle.inputs[piece], training=True, rng=dropout_rng, tape=tape
                )
                if train_bundle.task == "classification":
                    loss = softmax_cross_entropy(tape, logits, train_bundle.loss_targets[piece])
                else:
                    flat = reshape(tape, logits, (-1,))
                    loss = mse_loss(tape, flat, train_bundle.loss_targets[piece])
                backward(tape, loss, seed=weight)
                batch_loss += float(loss.data) * weight
            if not np.isfinite(batch_loss):
                record.divergence = f"non-finite loss at epoch {epoch}, batch start {start}"
                record.wall_time_s = time.perf_counter() - started
                raise DivergenceError(record.divergence, record)
            optimizer.step(params)
            loss_sum += batch_loss * batch.size
            seen += batch.size
        metric = evaluate(mdl, test_bundle, chunk=max(cfg.micro_batch, 16))
        record.epochs.append(
            {
                "epoch": epoch,
                "train_loss": loss_sum / seen,
                "metric": metric.primary,
            }
        )
        if record.best is None or metric.primary > record.best["metric"]["_primary"]:
            record.best = {"epoch": epoch, "metric": {**metric.to_dict(), "_primary": metric.primary}}
        record.final = {"epoch": epoch, "metric": {**metric.to_dict(), "_primary": metric.primary}}
        if verbose:
            print(
                f"epoch {epoch + 1}/{cfg.epochs} loss {loss_sum / seen:.4f} "
                f"metric {metric.primary:.4f}",
                flush=True,
            )
    record.wall_time_s = time.perf_counter() - started
    return record


# ---------------------------------------------------------------------------
# experiment configuration


MODEL_PRESETS = {
    **{f"image-eapcr-{v}": (lambda v=v: model_lib.image_attention_config(v, True)) for v in (1, 2, 3)},
    **{f"image-eacr-{v}": (lambda v=v: model_lib.image_attention_config(v, False)) for v in (1, 2, 3)},
    **{f"image-mlp-{v}": (lambda v=v: model_lib.image_mlp_config(v)) for v in range(1, 10)},
    "image-cnn": model_lib.image_cnn_config,
}


def _model_config_from(section, data_info: dict):
    """Build the model config from a preset name or an explicit dict.

    'auto' placeholders for n_features/vocab_size/n_outputs resolve from the
    prepared data.
    """
    if isinstance(section, str):
        if section not in MODEL_PRESETS:
            raise ConfigError(f"unknown model preset {section!r}")
        return MODEL_PRESETS[section]()
    if not isinstance(section, dict):
        raise ConfigError("model section must be a preset name or an object")
    resolved = dict(section)
    for key, value in list(resolved.items()):
        if value == "auto":
            if key not in data_info:
                raise ConfigError(f"cannot resolve {key!r} automatically for this dataset")
            resolved[key] = data_info[key]
    return config_from_dict(resolved)


def _prepare_image_bundles(dcfg: dict, model_kind: str, seed: int):
    threshold = float(dcfg.get("threshold", 128))
    if dcfg.get("kind") == "synthetic-image":
        side = int(dcfg.get("side", 12))
        base = synthetic_image_dataset(
            side=side,
            n_classes=int(dcfg.get("n_classes", 4)),
            n=int(dcfg["n_train"]) + int(dcfg["n_test"]),
            noise=float(dcfg.get("noise", 0.08)),
            seed=np.random.SeedSequence([seed, 0xDA7A]).generate_state(1)[0],
        )
    else:
        side = int(dcfg.get("side", 28))
        base = load_image_dataset(dcfg["images"], dcfg["labels"], side=side)
    if dcfg.get("scramble", False):
        base = synthesize_scrambled(base)
    subset_seed = int(np.random.SeedSequence([seed, 0x5EED]).generate_state(1)[0])
    train_ds, test_ds = draw_disjoint_subsets(
        base, int(dcfg["n_train"]), int(dcfg["n_test"]), subset_seed
    )

    n_classes = int(base.labels.max()) + 1
    info = {"n_features": side * side, "n_outputs": n_classes, "image_size": side,
            "vocab_size": 2, "side": side}

    def bundle(ds: ImageDataset) -> DataBundle:
        y = ds.labels.astype(np.int64)
        if model_kind in ("eapcr", "eacr"):
            x = encode_images(ds.images, threshold)
        elif model_kind == "mlp":
            x = encode_images(ds.images, threshold).astype(np.float32)  # indices over V=2, scaled
        elif model_kind == "cnn":
            x = (ds.images.astype(np.float32) / 255.0)[:, None, :, :]
        else:
            raise ConfigError(f"unknown model kind {model_kind!r}")
        return DataBundle(x, y, y, "classification", n_classes)

    dictionary = image_dictionary(side, threshold)
    return bundle(train_ds), bundle(test_ds), dictionary, info


def _prepare_tabular_bundles(dcfg: dict, model_kind: str, seed: int):
    if model_kind == "cnn":
        raise ConfigError("the image baseline cannot consume tabular data")
    with open(dcfg["schema"]) as fh:
        schema = FeatureSchema.from_json(fh.read())
    ds = load_tabular(dcfg["path"], schema)
    split_seed = int(np.random.SeedSequence([seed, 0x5EED]).generate_state(1)[0])
    task = "classification" if schema.target.kind == "class" else "regression"
    train_ds, test_ds = split(
        ds,
        float(dcfg.get("train_fraction", 0.8)),
        split_seed,
        stratified=bool(dcfg.get("stratified", task == "classification")),
    )
    dictionary = build_dictionary(
        train_ds.rows, schema, mode=dcfg.get("dictionary_mode", "per-feature")
    )
    vocab = dictionary.vocab_size
    info = {
        "n_features": schema.n_features,
        "vocab_size": vocab,
        "n_outputs": int(ds.targets.max()) + 1 if task == "classification" else 1,
    }
    stats = None
    if task == "regression":
        mean = float(train_ds.targets.mean())
        std = float(train_ds.targets.std())
        if std == 0.0:
            raise DataError("target column is constant; nothing to regress")
        stats = (mean, std)

    def bundle(part) -> DataBundle:
        idx = encode_rows(part.rows, dictionary)
        if model_kind == "mlp":
            x = idx.astype(np.float32) / max(vocab - 1, 1)
        else:
            x = idx
        if task == "classification":
            y = part.targets.astype(np.int64)
            return DataBundle(x, y, y, task, info["n_outputs"])
        raw = part.targets.astype(np.float64)
        standardized = ((raw - stats[0]) / stats[1]).astype(np.float32)
        return DataBundle(x, standardized, raw, task, None, stats)

    return bundle(train_ds), bundle(test_ds), dictionary, info


def synthetic_image_dataset(side: int, n_classes: int, n: int, noise: float, seed) -> ImageDataset:
    """Procedural stand-in for real benchmark images: each class is a fixed
    random half-tone prototype, samples flip pixels independently."""
    rng = np.random.default_rng(seed)
    prototypes = (rng.random((n_classes, side, side)) < 0.5).astype(np.uint8) * 255
    labels = rng.integers(0, n_classes, size=n).astype(np.uint8)
    flips = rng.random((n, side, side)) < noise
    images = prototypes[labels]
    images = np.where(flips, 255 - images, images).astype(np.uint8)
    return ImageDataset(images, labels, "synthetic")


def prepare_bundles(dcfg: dict, model_kind: str, seed: int):
    kind = dcfg.get("kind")
    if kind in ("image", "synthetic-image"):
        return _prepare_image_bundles(dcfg, model_kind, seed)
    if kind == "tabular":
        return _prepare_tabular_bundles(dcfg, model_kind, seed)
    raise ConfigError(f"unknown dataset kind {kind!r}")


def run_experiment(
    config: dict,
    seed: int,
    out_dir=None,
    reproducible: bool = False,
    verbose: bool = False,
) -> RunRecord:
    """Full pipeline: data, model, training, artifacts. Returns the record."""
    import os

    for section in ("dataset", "model", "train"):
        if section not in config:
            raise ConfigError(f"experiment config needs a {section!r} section")
    model_section = config["model"]
    model_kind = (
        model_section if isinstance(model_section, str) else model_section.get("kind")
    )
    if isinstance(model_section, str):
        for tag in ("eapcr", "eacr", "mlp", "cnn"):
            if tag in model_section:
                model_kind = tag
                break
    if model_kind not in ("eapcr", "eacr", "mlp", "cnn"):
        raise ConfigError(f"cannot determine model kind from {model_section!r}")

    train_bundle, test_bundle, dictionary, info = prepare_bundles(
        config["dataset"], model_kind, seed
    )
    mcfg = _model_config_from(model_section, info)
    if getattr(mcfg, "n_features", info["n_features"]) != info["n_features"]:
        raise ConfigError(
            f"model expects {mcfg.n_features} features, data has {info['n_features']}"
        )
    tcfg = TrainConfig.from_dict(config["train"])
    init_seed = int(np.random.SeedSequence([seed, 0x1217]).generate_state(1)[0])
    mdl = build_model(mcfg, seed=init_seed)
    train_seed = int(np.random.SeedSequence([seed, 0x7EA1]).generate_state(1)[0])

    record = RunRecord(
        name=str(config.get("name", "run")),
        seed=seed,
        reproducible=reproducible,
        config={
            "dataset": config["dataset"],
            "model": config_to_dict(mcfg),
            "train": asdict(tcfg),
        },
        param_count=param_count(mcfg),
    )
    try:
        train_model(mdl, train_bundle, test_bundle, tcfg, train_seed, record, verbose=verbose)
    finally:
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            stats = train_bundle.target_stats
            ckpt = save_checkpoint_with_dictionary(
                os.path.join(out_dir, f"{record.name}-seed{seed}.npz"), mdl, dictionary, stats
            )
            record.artifacts["checkpoint"] = ckpt
            dict_path = os.path.join(out_dir, f"{record.name}-dictionary.json")
            with open(dict_path, "w") as fh:
                fh.write(dictionary.to_json())
            record.artifacts["dictionary"] = dict_path
            record_path = os.path.join(out_dir, f"{record.name}-seed{seed}.json")
            with open(record_path, "w") as fh:
                fh.write(record.to_json())
            record.artifacts["record"] = record_path
    return record


def save_checkpoint_with_dictionary(path, mdl: Model, dictionary, target_stats):
    return model_lib.save_checkpoint(
        path, mdl, dictionary_sha256=dictionary.sha256() if dictionary else None,
        target_stats=target_stats,
    )
