"""Command-line interface.

Exit codes: 0 success, 1 usage problems or failed checks, 2 data/config
problems, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .analysis import (
    distance_dependence_table,
    distance_table_csv,
    info_gain_demo,
    pattern_from_attention,
    pattern_from_pixel_correlation,
    pattern_recall,
)
from .datasets import (
    load_image_dataset,
    synthesize_scrambled,
    write_idx_images,
    write_idx_labels,
)
from .encoding import FeatureDictionary, encode_images, encode_rows
from .errors import (
    ConfigError,
    DataError,
    DivergenceError,
    DomainError,
    EapcrError,
    FormatError,
    SchemaError,
    UsageError,
)
from .harness import DataBundle, evaluate, run_experiment
from .metrics import ClassificationMetrics
from .model import AttentionConfig, CnnConfig, MlpConfig, load_checkpoint
from .permutation import designed_permutation, random_permutation


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_json_config(path) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}: {e.msg}") from None


def _build_parser() -> _Parser:
    parser = _Parser(prog="eapcr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_perm = sub.add_parser("perm", help="permutation tools")
    perm_sub = p_perm.add_subparsers(dest="perm_command", required=True)
    p_dump = perm_sub.add_parser("dump", help="print a permutation, one index per line")
    p_dump.add_argument("--n", type=int, required=True)
    p_dump.add_argument("--kind", choices=["designed", "random"], default="designed")
    p_dump.add_argument("--seed", type=int, default=0)

    p_synth = sub.add_parser(
        "synth", help="write the layout-scrambled variant of an image set"
    )
    p_synth.add_argument("--images", required=True)
    p_synth.add_argument("--labels", required=True)
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--kind", choices=["designed", "random"], default="designed")
    p_synth.add_argument("--seed", type=int, default=0)

    p_train = sub.add_parser("train", help="run one training experiment")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", default="runs")
    p_train.add_argument("--reproducible", action="store_true")
    p_train.add_argument("--quiet", action="store_true")

    p_eval = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--images")
    p_eval.add_argument("--labels")
    p_eval.add_argument("--scramble", action="store_true",
                        help="scramble the images the way the synthesizer does")
    p_eval.add_argument("--csv")
    p_eval.add_argument("--dictionary", help="dictionary JSON written at training time")
    p_eval.add_argument("--threshold", type=float, default=128.0)
    p_eval.add_argument("--out")

    p_grad = sub.add_parser("gradcheck", help="finite-difference check of every operator")
    p_grad.add_argument("--skip-model", action="store_true",
                        help="operators only, skip the end-to-end model check")

    p_analyze = sub.add_parser("analyze", help="diagnostic analyses")
    an_sub = p_analyze.add_subparsers(dest="analysis", required=True)

    p_dist = an_sub.add_parser("distance", help="dependence vs pixel distance table")
    p_dist.add_argument("--images", required=True)
    p_dist.add_argument("--labels", required=True)
    p_dist.add_argument("--per-class", type=int, default=20)
    p_dist.add_argument("--reference", default="5,5")
    p_dist.add_argument("--threshold", type=float, default=128.0)
    p_dist.add_argument("--seed", type=int, default=0)
    p_dist.add_argument("--out")

    p_info = an_sub.add_parser("infogain", help="information-gain inequality demo")
    p_info.add_argument("--demo", action="store_true", required=True)

    p_rec = an_sub.add_parser("recover", help="recover pixel dependencies from attention")
    p_rec.add_argument("--checkpoint", required=True)
    p_rec.add_argument("--images", required=True)
    p_rec.add_argument("--labels", required=True)
    p_rec.add_argument("--truth", choices=["raw", "synth"], required=True)
    p_rec.add_argument("--no-scramble-input", action="store_true",
                       help="feed the model raw instead of scrambled images")
    p_rec.add_argument("--fraction", type=float, default=0.01)
    p_rec.add_argument("--samples", type=int, default=1000)
    p_rec.add_argument("--threshold", type=float, default=128.0)
    p_rec.add_argument("--seed", type=int, default=0)
    p_rec.add_argument("--out")

    return parser


def _cmd_perm(args) -> int:
    spec = (
        designed_permutation(args.n)
        if args.kind == "designed"
        else random_permutation(args.n, args.seed)
    )
    for value in spec.sigma:
        print(int(value))
    return 0


def _cmd_synth(args) -> int:
    ds = load_image_dataset(args.images, args.labels)
    side = ds.images.shape[1]
    perm = (
        designed_permutation(side) if args.kind == "designed"
        else random_permutation(side, args.seed)
    )
    out = synthesize_scrambled(ds, perm)
    os.makedirs(args.out_dir, exist_ok=True)
    img_path = os.path.join(args.out_dir, os.path.basename(args.images) + ".scrambled")
    lab_path = os.path.join(args.out_dir, os.path.basename(args.labels) + ".scrambled")
    write_idx_images(img_path, out.images)
    write_idx_labels(lab_path, out.labels)
    print(img_path)
    print(lab_path)
    return 0


def _cmd_train(args) -> int:
    config = _load_json_config(args.config)
    record = run_experiment(
        config,
        seed=args.seed,
        out_dir=args.out,
        reproducible=args.reproducible,
        verbose=not args.quiet,
    )
    final = record.final["metric"] if record.final else {}
    print(f"run {record.name}: {record.param_count} parameters")
    for key, value in final.items():
        if not key.startswith("_"):
            print(f"  final {key}: {value:.4f}" if isinstance(value, float) else f"  final {key}: {value}")
    if record.artifacts:
        print(f"  record: {record.artifacts.get('record')}")
    return 0


def _bundle_for_eval(mdl, args):
    cfg = mdl.config
    if args.csv:
        if not args.dictionary:
            raise UsageError("tabular eval needs --dictionary from the training run")
        with open(args.dictionary) as fh:
            dictionary = FeatureDictionary.from_json(fh.read())
        from .datasets import load_tabular

        ds = load_tabular(args.csv, dictionary.schema)
        idx = encode_rows(ds.rows, dictionary)
        if isinstance(cfg, MlpConfig):
            x = idx.astype(np.float32) / max(dictionary.vocab_size - 1, 1)
        else:
            x = idx
        if cfg.task == "classification":
            y = ds.targets.astype(np.int64)
            return DataBundle(x, y, y, "classification", cfg.n_outputs), dictionary
        raw = ds.targets.astype(np.float64)
        return DataBundle(x, raw, raw, "regression"), dictionary
    if not (args.images and args.labels):
        raise UsageError("image eval needs --images and --labels (or --csv)")
    ds = load_image_dataset(args.images, args.labels)
    if args.scramble:
        ds = synthesize_scrambled(ds)
    y = ds.labels.astype(np.int64)
    if isinstance(cfg, CnnConfig):
        x = (ds.images.astype(np.float32) / 255.0)[:, None, :, :]
    elif isinstance(cfg, MlpConfig):
        x = encode_images(ds.images, args.threshold).astype(np.float32)
    else:
        x = encode_images(ds.images, args.threshold)
    return DataBundle(x, y, y, "classification", cfg.n_outputs), None


def _cmd_eval(args) -> int:
    dictionary = None
    if args.dictionary:
        with open(args.dictionary) as fh:
            dictionary = FeatureDictionary.from_json(fh.read())
    mdl, _, target_stats = load_checkpoint(args.checkpoint, dictionary)
    bundle, _ = _bundle_for_eval(mdl, args)
    if bundle.task == "regression" and target_stats is not None:
        bundle.target_stats = target_stats
        bundle.loss_targets = (
            (bundle.eval_targets - target_stats[0]) / target_stats[1]
        ).astype(np.float32)
    result = evaluate(mdl, bundle)
    payload = result.to_dict()
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text)
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    results = run_suite(include_model=not args.skip_model)
    width = max(len(r.name) for r in results)
    ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        ok &= r.passed
        print(f"{r.name:<{width}}  max_rel_err={r.max_error:.3e}  tol={r.tolerance:.0e}  {status}")
    print(f"{'all checks pass' if ok else 'CHECK FAILURES PRESENT'}")
    return 0 if ok else 1


def _cmd_analyze_distance(args) -> int:
    ds = load_image_dataset(args.images, args.labels)
    try:
        ref = tuple(int(p) for p in args.reference.split(","))
        assert len(ref) == 2
    except (ValueError, AssertionError):
        raise UsageError(f"--reference must be 'row,col', got {args.reference!r}") from None
    rows = distance_dependence_table(
        ds.images, ds.labels, per_class=args.per_class, reference=ref,
        threshold=args.threshold, seed=args.seed,
    )
    text = distance_table_csv(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {args.out} ({len(rows)} distances)")
    else:
        print(text, end="")
    return 0


def _cmd_analyze_infogain() -> int:
    rows = info_gain_demo()
    ok = True
    for row in rows:
        status = "ok" if row.holds else "VIOLATED"
        ok &= row.holds
        print(f"{row.name:<45} {row.value:+.12f}  expected {row.expectation:<25} {status}")
    return 0 if ok else 1


def _cmd_analyze_recover(args) -> int:
    mdl, _, _ = load_checkpoint(args.checkpoint)
    if not isinstance(mdl.config, AttentionConfig):
        raise UsageError("recovery needs a checkpoint of the attention extractor")
    ds = load_image_dataset(args.images, args.labels)
    model_ds = ds if args.no_scramble_input else synthesize_scrambled(ds)
    truth_ds = ds if args.truth == "raw" else synthesize_scrambled(ds)
    n = min(args.samples, len(ds))
    sel = np.random.default_rng(args.seed).permutation(len(ds))[:n]
    tokens = encode_images(model_ds.images[sel], args.threshold)
    recovered = pattern_from_attention(mdl, tokens, args.fraction)
    truth = pattern_from_pixel_correlation(truth_ds.images[sel], args.fraction)
    payload = {
        "recall": pattern_recall(recovered, truth),
        "fraction": args.fraction,
        "n_pairs": truth.n_pairs,
        "truth": args.truth,
        "samples": int(n),
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text)
    return 0


def cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "perm":
            return _cmd_perm(args)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "gradcheck":
            return _cmd_gradcheck(args)
        if args.command == "analyze":
            if args.analysis == "distance":
                return _cmd_analyze_distance(args)
            if args.analysis == "infogain":
                return _cmd_analyze_infogain()
            return _cmd_analyze_recover(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except DivergenceError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        if e.record is not None and e.record.artifacts.get("record"):
            print(f"diagnostic record: {e.record.artifacts['record']}", file=sys.stderr)
        return 3
    except (ConfigError, DataError, SchemaError, FormatError, DomainError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2
    except EapcrError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli(sys.argv[1:]))
