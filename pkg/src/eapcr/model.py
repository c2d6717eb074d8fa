"""Model definitions.

The main extractor turns a row of token indices into a feature map in four
moves: embed every token, form the bilinear attention A = tanh(E E^T), run A
through a small conv stack twice (once raw, once with rows and columns
reordered by a designed permutation), and add a residual two-layer head fed by
the per-token embedding means. Because every embedding row is a table gather,
E E^T is computed as a gather into the vocabulary Gram matrix; the tests pin
this equal to the literal embed-then-multiply pipeline.

Also here: the two reference baselines (a plain MLP on scaled token values and
a plain CNN on raw images), parameter accounting, and checkpoint I/O.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import ops
from .autodiff import Tape, Tensor, backward, parameter
from .errors import ConfigError, FormatError
from .permutation import PermutationSpec, designed_permutation, random_permutation


@dataclass(frozen=True)
class ConvSpec:
    kernel: int
    channels: int
    pool: bool = True


def _simulate_stack(size: int, stack: tuple[ConvSpec, ...], where: str) -> int:
    h = size
    for i, layer in enumerate(stack):
        if layer.kernel > h:
            raise ConfigError(f"{where}: conv layer {i} kernel {layer.kernel} exceeds input {h}")
        if layer.pool:
            if h < 2:
                raise ConfigError(f"{where}: conv layer {i} cannot pool a {h}-pixel map")
            h //= 2
    return h


@dataclass(frozen=True)
class AttentionConfig:
    """Configuration of the attention extractor (with or without the permuted branch)."""

    n_features: int
    vocab_size: int
    embed_size: int
    conv_stack: tuple[ConvSpec, ...]
    adaptive_out: int
    residual_hidden: int
    n_outputs: int
    task: str = "classification"
    dropout: float = 0.5
    permuted_branch: bool = True
    permutation: PermutationSpec | None = None

    def __post_init__(self):
        if self.task not in ("classification", "regression"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.task == "regression" and self.n_outputs != 1:
            raise ConfigError("regression models emit a single output")
        if not self.conv_stack:
            raise ConfigError("conv stack cannot be empty")
        h = _simulate_stack(self.n_features, self.conv_stack, "attention model")
        if self.adaptive_out > h:
            raise ConfigError(
                f"adaptive pool {self.adaptive_out} exceeds final map size {h}"
            )
        if self.permuted_branch:
            perm = self.permutation or designed_permutation(self.n_features)
            if perm.n != self.n_features:
                raise ConfigError(f"permutation of {perm.n} vs {self.n_features} features")
            object.__setattr__(self, "permutation", perm)

    @property
    def branches(self) -> int:
        return 2 if self.permuted_branch else 1

    @property
    def branch_width(self) -> int:
        return self.conv_stack[-1].channels * self.adaptive_out ** 2


@dataclass(frozen=True)
class MlpConfig:
    """Two-layer baseline on scaled token values."""

    n_features: int
    hidden: int
    n_outputs: int
    task: str = "classification"
    dropout: float = 0.5

    def __post_init__(self):
        if self.task not in ("classification", "regression"):
            raise ConfigError(f"unknown task {self.task!r}")


@dataclass(frozen=True)
class CnnConfig:
    """Small image CNN baseline on raw pixels."""

    image_size: int
    conv_stack: tuple[ConvSpec, ...]
    hidden: int
    n_outputs: int
    task: str = "classification"
    dropout: float = 0.5

    def __post_init__(self):
        _simulate_stack(self.image_size, self.conv_stack, "image model")

    @property
    def flat_width(self) -> int:
        return self.conv_stack[-1].channels * _simulate_stack(
            self.image_size, self.conv_stack, "image model"
        ) ** 2


# ---------------------------------------------------------------------------
# parameters


def param_shapes(cfg) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every trainable array, in a fixed order."""
    shapes: dict[str, tuple[int, ...]] = {}
    if isinstance(cfg, AttentionConfig):
        shapes["embedding"] = (cfg.vocab_size, cfg.embed_size)
        prefixes = ["raw"] + (["perm"] if cfg.permuted_branch else [])
        for prefix in prefixes:
            chans = 1
            for i, layer in enumerate(cfg.conv_stack):
                shapes[f"{prefix}_conv{i}_w"] = (layer.channels, chans, layer.kernel, layer.kernel)
                shapes[f"{prefix}_conv{i}_b"] = (layer.channels,)
                chans = layer.channels
        shapes["head_w"] = (cfg.n_outputs, cfg.branches * cfg.branch_width)
        shapes["head_b"] = (cfg.n_outputs,)
        shapes["res_w1"] = (cfg.residual_hidden, cfg.n_features)
        shapes["res_b1"] = (cfg.residual_hidden,)
        shapes["res_w2"] = (cfg.n_outputs, cfg.residual_hidden)
        shapes["res_b2"] = (cfg.n_outputs,)
    elif isinstance(cfg, MlpConfig):
        shapes["w1"] = (cfg.hidden, cfg.n_features)
        shapes["b1"] = (cfg.hidden,)
        shapes["w2"] = (cfg.n_outputs, cfg.hidden)
        shapes["b2"] = (cfg.n_outputs,)
    elif isinstance(cfg, CnnConfig):
        chans = 1
        for i, layer in enumerate(cfg.conv_stack):
            shapes[f"conv{i}_w"] = (layer.channels, chans, layer.kernel, layer.kernel)
            shapes[f"conv{i}_b"] = (layer.channels,)
            chans = layer.channels
        shapes["w1"] = (cfg.hidden, cfg.flat_width)
        shapes["b1"] = (cfg.hidden,)
        shapes["w2"] = (cfg.n_outputs, cfg.hidden)
        shapes["b2"] = (cfg.n_outputs,)
    else:
        raise ConfigError(f"unknown config type {type(cfg).__name__}")
    return shapes


def param_count(cfg) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(cfg).values())


def init_params(cfg, rng: np.random.Generator, dtype=np.float32) -> dict[str, Tensor]:
    """Embedding rows ~ N(0,1); conv kernels He-normal; dense weights Glorot-uniform."""
    params: dict[str, Tensor] = {}
    for name, shape in param_shapes(cfg).items():
        if name == "embedding":
            data = rng.standard_normal(shape)
        elif len(shape) == 4:
            fan_in = shape[1] * shape[2] * shape[3]
            data = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        elif len(shape) == 2:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            data = rng.uniform(-limit, limit, shape)
        else:
            data = np.zeros(shape)
        params[name] = parameter(np.asarray(data, dtype=dtype), name=name)
    return params


# ---------------------------------------------------------------------------
# forward passes


def _conv_branch(cfg, params, prefix: str, image: Tensor, tape) -> Tensor:
    x = image
    for i, layer in enumerate(cfg.conv_stack):
        x = ops.conv2d(tape, x, params[f"{prefix}conv{i}_w"], params[f"{prefix}conv{i}_b"])
        x = ops.relu(tape, x)
        if layer.pool:
            x = ops.maxpool2d(tape, x)
    x = ops.adaptive_avgpool2d(tape, x, cfg.adaptive_out) if isinstance(cfg, AttentionConfig) else x
    return ops.flatten(tape, x, batched=True)


class Model:
    """A config plus its parameter tensors."""

    def __init__(self, config, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    @property
    def kind(self) -> str:
        if isinstance(self.config, AttentionConfig):
            return "eapcr" if self.config.permuted_branch else "eacr"
        return "mlp" if isinstance(self.config, MlpConfig) else "cnn"

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def forward_batch(self, inputs, training: bool = False, rng=None, tape: Tape | None = None,
                      want_internals: bool = False):
        """Logits [B, n_outputs]; inputs are token indices [B, N] for the
        attention models, scaled values [B, N] for the MLP, images [B,1,H,W]
        for the CNN."""
        cfg, p = self.config, self.params
        internals: dict = {}
        if isinstance(cfg, AttentionConfig):
            idx = np.asarray(inputs)
            nb, n = idx.shape
            gram = ops.symmetrize(
                tape, ops.matmul(tape, p["embedding"], ops.transpose(tape, p["embedding"]))
            )
            # contract: symmetric Gram with non-negative diagonal makes every
            # per-sample attention matrix exactly symmetric with tanh(|e|^2) diag
            assert np.array_equal(gram.data, gram.data.T)
            assert (np.diagonal(gram.data) >= 0).all()
            att = ops.tanh(tape, ops.pairwise_gather(tape, gram, idx))
            feats = [
                _conv_branch(cfg, p, "raw_", ops.reshape(tape, att, (nb, 1, n, n)), tape)
            ]
            if cfg.permuted_branch:
                permuted = ops.apply_two_sided(tape, att, cfg.permutation.sigma)
                feats.append(
                    _conv_branch(cfg, p, "perm_", ops.reshape(tape, permuted, (nb, 1, n, n)), tape)
                )
            feat = ops.concat(tape, feats, axis=-1) if len(feats) > 1 else feats[0]
            feat = ops.dropout(tape, feat, cfg.dropout, training, rng)
            head = ops.dense(tape, feat, p["head_w"], p["head_b"])
            zvec = ops.row_gather(tape, ops.row_mean(tape, p["embedding"]), idx)
            hid = ops.relu(tape, ops.dense(tape, zvec, p["res_w1"], p["res_b1"]))
            hid = ops.dropout(tape, hid, cfg.dropout, training, rng)
            res = ops.dense(tape, hid, p["res_w2"], p["res_b2"])
            logits = ops.add(tape, head, res)
            if want_internals:
                internals = {
                    "attention": att,
                    "branches": feats,
                    "head_logits": head,
                    "residual_logits": res,
                }
        elif isinstance(cfg, MlpConfig):
            x = inputs if isinstance(inputs, Tensor) else Tensor(np.asarray(inputs))
            hid = ops.relu(tape, ops.dense(tape, x, p["w1"], p["b1"]))
            hid = ops.dropout(tape, hid, cfg.dropout, training, rng)
            logits = ops.dense(tape, hid, p["w2"], p["b2"])
        else:
            x = inputs if isinstance(inputs, Tensor) else Tensor(np.asarray(inputs))
            flat = _conv_branch(cfg, p, "", x, tape)
            hid = ops.relu(tape, ops.dense(tape, flat, p["w1"], p["b1"]))
            hid = ops.dropout(tape, hid, cfg.dropout, training, rng)
            logits = ops.dense(tape, hid, p["w2"], p["b2"])
        return (logits, internals) if want_internals else logits

    def predict(self, inputs) -> np.ndarray:
        """Class ids (ties resolve to the lower id) or raw regression outputs."""
        out = self.forward_batch(inputs, training=False).data
        if self.config.task == "classification":
            return out.argmax(axis=-1)
        return out[:, 0]


def build_model(cfg, seed: int = 0, dtype=np.float32) -> Model:
    rng = np.random.default_rng(seed)
    return Model(cfg, init_params(cfg, rng, dtype))


def build_eapcr(cfg: AttentionConfig, seed: int = 0, dtype=np.float32) -> Model:
    if not cfg.permuted_branch:
        raise ConfigError("this extractor variant needs the permuted branch on")
    return build_model(cfg, seed, dtype)


def build_eacr(cfg: AttentionConfig, seed: int = 0, dtype=np.float32) -> Model:
    if cfg.permuted_branch:
        raise ConfigError("the reduced variant runs without the permuted branch")
    return build_model(cfg, seed, dtype)


def build_mlp(cfg: MlpConfig, seed: int = 0, dtype=np.float32) -> Model:
    return build_model(cfg, seed, dtype)


def build_plain_cnn(cfg: CnnConfig, seed: int = 0, dtype=np.float32) -> Model:
    return build_model(cfg, seed, dtype)


# ---------------------------------------------------------------------------
# benchmark presets

MLP_HIDDEN_LADDER = (26, 40, 52, 64, 80, 90, 105, 115, 128)
IMAGE_CONV_STACK = (ConvSpec(4, 4), ConvSpec(4, 8), ConvSpec(4, 16), ConvSpec(4, 16))
RESIDUAL_LADDER = (26, 64, 89)


def image_attention_config(variant: int = 1, permuted: bool = True, n_classes: int = 10,
                           side: int = 28) -> AttentionConfig:
    """Benchmark extractor for binarized images; variant picks residual width."""
    return AttentionConfig(
        n_features=side * side,
        vocab_size=2,
        embed_size=128,
        conv_stack=IMAGE_CONV_STACK,
        adaptive_out=3,
        residual_hidden=RESIDUAL_LADDER[variant - 1],
        n_outputs=n_classes,
        permuted_branch=permuted,
    )


def image_mlp_config(variant: int = 1, n_classes: int = 10, side: int = 28) -> MlpConfig:
    return MlpConfig(side * side, MLP_HIDDEN_LADDER[variant - 1], n_classes)


def image_cnn_config(n_classes: int = 10, side: int = 28) -> CnnConfig:
    return CnnConfig(side, (ConvSpec(3, 8), ConvSpec(3, 16)), 26, n_classes)


# ---------------------------------------------------------------------------
# config (de)serialization


def config_to_dict(cfg) -> dict:
    if isinstance(cfg, AttentionConfig):
        d = {
            "kind": "eapcr" if cfg.permuted_branch else "eacr",
            "n_features": cfg.n_features,
            "vocab_size": cfg.vocab_size,
            "embed_size": cfg.embed_size,
            "conv_stack": [[c.kernel, c.channels, c.pool] for c in cfg.conv_stack],
            "adaptive_out": cfg.adaptive_out,
            "residual_hidden": cfg.residual_hidden,
            "n_outputs": cfg.n_outputs,
            "task": cfg.task,
            "dropout": cfg.dropout,
        }
        if cfg.permuted_branch:
            d["permutation"] = cfg.permutation.to_dict()
        return d
    if isinstance(cfg, MlpConfig):
        return {
            "kind": "mlp",
            "n_features": cfg.n_features,
            "hidden": cfg.hidden,
            "n_outputs": cfg.n_outputs,
            "task": cfg.task,
            "dropout": cfg.dropout,
        }
    return {
        "kind": "cnn",
        "image_size": cfg.image_size,
        "conv_stack": [[c.kernel, c.channels, c.pool] for c in cfg.conv_stack],
        "hidden": cfg.hidden,
        "n_outputs": cfg.n_outputs,
        "task": cfg.task,
        "dropout": cfg.dropout,
    }


def _permutation_from_config(value, n: int) -> PermutationSpec | None:
    if value is None or value == "designed":
        return designed_permutation(n)
    if isinstance(value, str) and value.startswith("random:"):
        return random_permutation(n, int(value.split(":", 1)[1]))
    if isinstance(value, dict):
        return PermutationSpec.from_dict(value)
    raise ConfigError(f"cannot interpret permutation {value!r}")


def config_from_dict(d: dict):
    try:
        kind = d["kind"]
        if kind in ("eapcr", "eacr"):
            permuted = kind == "eapcr"
            return AttentionConfig(
                n_features=int(d["n_features"]),
                vocab_size=int(d["vocab_size"]),
                embed_size=int(d["embed_size"]),
                conv_stack=tuple(ConvSpec(int(k), int(c), bool(p)) for k, c, p in d["conv_stack"]),
                adaptive_out=int(d["adaptive_out"]),
                residual_hidden=int(d["residual_hidden"]),
                n_outputs=int(d["n_outputs"]),
                task=d.get("task", "classification"),
                dropout=float(d.get("dropout", 0.5)),
                permuted_branch=permuted,
                permutation=_permutation_from_config(d.get("permutation"), int(d["n_features"]))
                if permuted
                else None,
            )
        if kind == "mlp":
            return MlpConfig(
                n_features=int(d["n_features"]),
                hidden=int(d["hidden"]),
                n_outputs=int(d["n_outputs"]),
                task=d.get("task", "classification"),
                dropout=float(d.get("dropout", 0.5)),
            )
        if kind == "cnn":
            return CnnConfig(
                image_size=int(d["image_size"]),
                conv_stack=tuple(ConvSpec(int(k), int(c), bool(p)) for k, c, p in d["conv_stack"]),
                hidden=int(d["hidden"]),
                n_outputs=int(d["n_outputs"]),
                task=d.get("task", "classification"),
                dropout=float(d.get("dropout", 0.5)),
            )
    except KeyError as e:
        raise ConfigError(f"model config is missing key {e}") from e
    raise ConfigError(f"unknown model kind {d.get('kind')!r}")


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model: Model, dictionary_sha256: str | None = None,
                    target_stats: tuple[float, float] | None = None) -> str:
    """One .npz: parameter arrays + JSON metadata (config, dictionary hash, stats).

    Returns the actual path written (a .npz suffix is enforced).
    """
    path = str(path)
    if not path.endswith(".npz"):
        path += ".npz"
    meta = {
        "format": 1,
        "config": config_to_dict(model.config),
        "dictionary_sha256": dictionary_sha256,
        "target_stats": list(target_stats) if target_stats else None,
    }
    arrays = {f"param::{k}": t.data for k, t in model.params.items()}
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
    return path


def load_checkpoint(path, dictionary=None):
    """Rebuild the model; verifies parameter shapes and, when a dictionary is
    given, its SHA-256 against the one stored at save time.

    Returns (model, dictionary_sha256, target_stats).
    """
    with np.load(path) as blob:
        if "meta" not in blob:
            raise FormatError(f"{path} is not a checkpoint (no metadata)")
        meta = json.loads(bytes(blob["meta"]).decode())
        cfg = config_from_dict(meta["config"])
        expected = param_shapes(cfg)
        params: dict[str, Tensor] = {}
        for name, shape in expected.items():
            key = f"param::{name}"
            if key not in blob:
                raise FormatError(f"checkpoint lacks parameter {name!r}")
            arr = blob[key]
            if arr.shape != shape:
                raise FormatError(f"parameter {name!r} has shape {arr.shape}, expected {shape}")
            params[name] = parameter(arr, name=name)
    stored_hash = meta.get("dictionary_sha256")
    if dictionary is not None and stored_hash is not None and dictionary.sha256() != stored_hash:
        raise FormatError("feature dictionary does not match the one the model was trained with")
    stats = meta.get("target_stats")
    return Model(cfg, params), stored_hash, (tuple(stats) if stats else None)


# ---------------------------------------------------------------------------
# end-to-end gradient verification on a miniature configuration


def tiny_config() -> AttentionConfig:
    return AttentionConfig(
        n_features=9,
        vocab_size=5,
        embed_size=4,
        conv_stack=(ConvSpec(4, 4),),
        adaptive_out=3,
        residual_hidden=4,
        n_outputs=2,
        dropout=0.0,
    )


def end_to_end_gradcheck() -> float:
    """Max relative error of the full model's gradients vs central differences."""
    from .gradcheck import check_gradients

    model = build_model(tiny_config(), seed=3, dtype=np.float64)
    rng = np.random.default_rng(11)
    idx = rng.integers(0, 5, size=(2, 9))
    labels = np.array([0, 1])

    def build(tape):
        logits = model.forward_batch(idx, training=False, tape=tape)
        return ops.softmax_cross_entropy(tape, logits, labels)

    errors = check_gradients(build, model.params)
    return max(errors.values())
