"""Training loop behavior, reproducibility, and experiment orchestration."""

import json

import numpy as np
import pytest

from eapcr.errors import ConfigError, DivergenceError
from eapcr.harness import (
    DataBundle,
    MODEL_PRESETS,
    RunRecord,
    TrainConfig,
    evaluate,
    prepare_bundles,
    run_experiment,
    synthetic_image_dataset,
    train_model,
)
from eapcr.metrics import regression_metrics
from eapcr.model import MlpConfig, build_model, load_checkpoint
from eapcr.encoding import FeatureDictionary


def blob_bundle(n=24, seed=0):
    """Linearly separable 2-feature points; any sane trainer reaches 100%."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n).astype(np.int64)
    x = rng.normal(0.0, 0.3, (n, 2)).astype(np.float32)
    x[:, 0] += y * 2.0
    return DataBundle(x, y, y, "classification", 2)


def fresh_record(seed=0):
    return RunRecord(name="t", seed=seed, reproducible=True, config={}, param_count=0)


# ---------------------------------------------------------------------------
# TrainConfig


def test_train_config_defaults_and_validation():
    cfg = TrainConfig()
    assert (cfg.epochs, cfg.batch_size, cfg.lr, cfg.optimizer, cfg.micro_batch) == (
        100, 64, 0.003, "adam", 8,
    )
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(micro_batch=0)
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"epochs": 5, "momentum": 0.9})
    assert TrainConfig.from_dict({"epochs": 5}).epochs == 5


# ---------------------------------------------------------------------------
# evaluate


def test_evaluate_is_deterministic_despite_dropout_config():
    mdl = build_model(MlpConfig(2, 8, 2, dropout=0.5), seed=1)
    bundle = blob_bundle()
    a = evaluate(mdl, bundle)
    b = evaluate(mdl, bundle)
    assert a == b


def test_evaluate_chunking_does_not_change_metrics():
    mdl = build_model(MlpConfig(2, 8, 2, dropout=0.0), seed=1)
    bundle = blob_bundle(n=37)
    assert evaluate(mdl, bundle, chunk=5) == evaluate(mdl, bundle, chunk=64)


def test_evaluate_destandardizes_regression_predictions():
    mdl = build_model(MlpConfig(1, 4, 1, task="regression", dropout=0.0), seed=2)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(10, 1)).astype(np.float32)
    raw = rng.normal(5.0, 2.0, 10)
    stats = (5.0, 2.0)
    std_targets = ((raw - stats[0]) / stats[1]).astype(np.float32)
    bundle = DataBundle(x, std_targets, raw, "regression", None, stats)
    got = evaluate(mdl, bundle)
    manual = regression_metrics(raw, (mdl.predict(x) * 2.0 + 5.0).astype(np.float64))
    assert got == manual


# ---------------------------------------------------------------------------
# train_model


def test_training_learns_a_separable_problem():
    mdl = build_model(MlpConfig(2, 8, 2, dropout=0.0), seed=1)
    tr, te = blob_bundle(n=48, seed=0), blob_bundle(n=24, seed=1)
    cfg = TrainConfig(epochs=8, batch_size=8, lr=0.05, micro_batch=8)
    rec = train_model(mdl, tr, te, cfg, seed=5, record=fresh_record())
    losses = [e["train_loss"] for e in rec.epochs]
    assert len(losses) == 8
    assert losses[-1] < losses[0] * 0.5
    assert rec.final["metric"]["accuracy"] == 1.0
    assert rec.best["metric"]["_primary"] >= rec.epochs[0]["metric"]
    assert rec.wall_time_s > 0


def test_micro_batching_matches_monolithic_batch():
    tr, te = blob_bundle(n=12, seed=2), blob_bundle(n=8, seed=3)
    results = []
    for micro in (12, 5):
        mdl = build_model(MlpConfig(2, 6, 2, dropout=0.0), seed=4)
        cfg = TrainConfig(epochs=1, batch_size=12, lr=0.1, optimizer="sgd", micro_batch=micro)
        train_model(mdl, tr, te, cfg, seed=6, record=fresh_record())
        results.append({k: t.data.copy() for k, t in mdl.params.items()})
    for name in results[0]:
        np.testing.assert_allclose(
            results[0][name], results[1][name], rtol=1e-5, atol=1e-6
        )


def test_replay_digest_is_bitwise_reproducible():
    def run_once(seed):
        mdl = build_model(MlpConfig(2, 8, 2, dropout=0.5), seed=1)
        rec = fresh_record(seed)
        cfg = TrainConfig(epochs=3, batch_size=8, lr=0.05, micro_batch=4)
        train_model(mdl, blob_bundle(48, 0), blob_bundle(24, 1), cfg, seed, rec)
        return rec

    a, b = run_once(3), run_once(3)
    assert a.replay_digest() == b.replay_digest()
    assert a.epochs == b.epochs
    c = run_once(4)
    assert a.replay_digest() != c.replay_digest()
    # wall time is excluded from the digest on purpose
    a.wall_time_s = 999.0
    assert a.replay_digest() == b.replay_digest()


def test_divergence_raises_with_partial_record():
    mdl = build_model(MlpConfig(2, 8, 2, dropout=0.0), seed=1)
    mdl.params["w1"].data[...] = np.inf
    cfg = TrainConfig(epochs=2, batch_size=8, micro_batch=8)
    rec = fresh_record()
    with pytest.raises(DivergenceError) as err:
        train_model(mdl, blob_bundle(16), blob_bundle(8, 1), cfg, seed=0, record=rec)
    assert err.value.record is rec
    assert "epoch 0" in rec.divergence


# ---------------------------------------------------------------------------
# RunRecord


def test_run_record_json_round_trip():
    rec = fresh_record(7)
    rec.epochs.append({"epoch": 0, "train_loss": 1.25, "metric": 0.5})
    rec.best = {"epoch": 0, "metric": {"_primary": 0.5}}
    again = RunRecord.from_json(rec.to_json())
    assert again == rec
    assert again.replay_digest() == rec.replay_digest()


# ---------------------------------------------------------------------------
# synthetic images and bundle preparation


def test_synthetic_images_are_deterministic_half_tone():
    a = synthetic_image_dataset(side=6, n_classes=3, n=20, noise=0.1, seed=5)
    b = synthetic_image_dataset(side=6, n_classes=3, n=20, noise=0.1, seed=5)
    np.testing.assert_array_equal(a.images, b.images)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.images.shape == (20, 6, 6)
    assert set(np.unique(a.images)) <= {0, 255}
    assert a.labels.max() < 3
    # zero noise collapses every sample onto its class prototype
    clean = synthetic_image_dataset(side=6, n_classes=3, n=30, noise=0.0, seed=5)
    for cls in range(3):
        members = clean.images[clean.labels == cls]
        assert (members == members[0]).all()


def synth_dataset_cfg(**over):
    cfg = {"kind": "synthetic-image", "side": 6, "n_classes": 3, "n_train": 32,
           "n_test": 16, "noise": 0.05}
    cfg.update(over)
    return cfg


def test_prepare_bundles_per_model_kind():
    tr, te, dictionary, info = prepare_bundles(synth_dataset_cfg(), "eapcr", seed=0)
    assert info == {"n_features": 36, "n_outputs": 3, "image_size": 6, "vocab_size": 2,
                    "side": 6}
    assert len(tr) == 32 and len(te) == 16
    assert tr.inputs.dtype == np.int32 and set(np.unique(tr.inputs)) <= {0, 1}
    assert dictionary.vocab_size == 2

    tr, _, _, _ = prepare_bundles(synth_dataset_cfg(), "mlp", seed=0)
    assert tr.inputs.dtype == np.float32

    tr, _, _, _ = prepare_bundles(synth_dataset_cfg(), "cnn", seed=0)
    assert tr.inputs.shape == (32, 1, 6, 6)
    assert tr.inputs.max() <= 1.0

    with pytest.raises(ConfigError):
        prepare_bundles({"kind": "parquet"}, "mlp", seed=0)
    with pytest.raises(ConfigError):
        prepare_bundles({"kind": "tabular", "path": "x", "schema": "y"}, "cnn", seed=0)


def test_prepare_bundles_subsets_depend_on_seed_not_model():
    a_tr, _, _, _ = prepare_bundles(synth_dataset_cfg(), "eapcr", seed=1)
    b_tr, _, _, _ = prepare_bundles(synth_dataset_cfg(), "mlp", seed=1)
    # same pool, same subset: the mlp sees the same binarized pixels as floats
    np.testing.assert_array_equal(a_tr.inputs.astype(np.float32), b_tr.inputs)
    c_tr, _, _, _ = prepare_bundles(synth_dataset_cfg(), "eapcr", seed=2)
    assert not np.array_equal(a_tr.eval_targets, c_tr.eval_targets)


def test_model_presets_cover_benchmark_grid():
    assert set(MODEL_PRESETS) == (
        {f"image-eapcr-{v}" for v in (1, 2, 3)}
        | {f"image-eacr-{v}" for v in (1, 2, 3)}
        | {f"image-mlp-{v}" for v in range(1, 10)}
        | {"image-cnn"}
    )
    assert MODEL_PRESETS["image-eapcr-2"]().permuted_branch
    assert not MODEL_PRESETS["image-eacr-2"]().permuted_branch
    assert MODEL_PRESETS["image-mlp-9"]().hidden == 128


# ---------------------------------------------------------------------------
# run_experiment


def mlp_experiment(**train_over):
    train = {"epochs": 3, "batch_size": 16, "lr": 0.05, "micro_batch": 16}
    train.update(train_over)
    return {
        "name": "synth-mlp",
        "dataset": synth_dataset_cfg(),
        "model": {"kind": "mlp", "n_features": "auto", "hidden": 8, "n_outputs": "auto",
                  "dropout": 0.0},
        "train": train,
    }


def test_run_experiment_end_to_end(tmp_path):
    rec = run_experiment(mlp_experiment(), seed=11, out_dir=tmp_path)
    assert len(rec.epochs) == 3
    assert rec.param_count == 8 * 36 + 8 + 3 * 8 + 3
    assert rec.config["model"]["kind"] == "mlp"
    assert rec.config["model"]["n_features"] == 36

    ckpt = rec.artifacts["checkpoint"]
    with open(rec.artifacts["dictionary"]) as fh:
        dictionary = FeatureDictionary.from_json(fh.read())
    mdl, stored, _ = load_checkpoint(ckpt, dictionary=dictionary)
    assert stored == dictionary.sha256()
    with open(rec.artifacts["record"]) as fh:
        again = RunRecord.from_json(fh.read())
    assert again.replay_digest() == rec.replay_digest()


def test_run_experiment_is_reproducible():
    a = run_experiment(mlp_experiment(), seed=11)
    b = run_experiment(mlp_experiment(), seed=11)
    c = run_experiment(mlp_experiment(), seed=12)
    assert a.replay_digest() == b.replay_digest()
    assert a.replay_digest() != c.replay_digest()


def test_run_experiment_attention_preset_path():
    config = {
        "dataset": synth_dataset_cfg(n_train=24, n_test=12),
        "model": {
            "kind": "eapcr", "n_features": "auto", "vocab_size": "auto",
            "embed_size": 8, "conv_stack": [[3, 4, True]], "adaptive_out": 3,
            "residual_hidden": 6, "n_outputs": "auto", "dropout": 0.0,
        },
        "train": {"epochs": 1, "batch_size": 12, "micro_batch": 6},
    }
    rec = run_experiment(config, seed=3)
    assert rec.config["model"]["kind"] == "eapcr"
    assert rec.config["model"]["permutation"]["provenance"] == "designed{R=6,L=6}"
    assert len(rec.epochs) == 1


def test_run_experiment_validation():
    with pytest.raises(ConfigError):
        run_experiment({"model": "image-cnn", "train": {}}, seed=0)
    with pytest.raises(ConfigError):
        run_experiment(
            {"dataset": synth_dataset_cfg(), "model": "image-resnet", "train": {}}, seed=0
        )
    bad = mlp_experiment()
    bad["model"] = dict(bad["model"], n_features=99)
    with pytest.raises(ConfigError):
        run_experiment(bad, seed=0)


def test_run_experiment_writes_artifacts_on_divergence(tmp_path):
    config = mlp_experiment(lr=1e20, epochs=2)
    with pytest.raises(DivergenceError) as err:
        run_experiment(config, seed=1, out_dir=tmp_path)
    rec = err.value.record
    assert rec.divergence is not None
    with open(rec.artifacts["record"]) as fh:
        stored = json.load(fh)
    assert stored["divergence"] == rec.divergence
