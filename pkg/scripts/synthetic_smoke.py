"""Self-contained smoke run, no downloads needed.

Generates a synthetic scrambled-image task (class prototypes with pixel
noise), trains the small extractor and an mlp of similar budget, and prints
both accuracies with runtimes. This demonstrates that both training
pipelines work end to end; it is not an ordering benchmark, because
nearest-prototype tasks are easy enough for the mlp to saturate. Ordering
claims live in run_mnist_benchmark.py. Defaults finish in well under a
minute on one core.
"""

import argparse
import sys
import os
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from eapcr.harness import run_experiment  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--side", type=int, default=12)
    ap.add_argument("--classes", type=int, default=4)
    ap.add_argument("--train", type=int, default=192)
    ap.add_argument("--test", type=int, default=96)
    ap.add_argument("--epochs", type=int, default=6)
    ap.add_argument("--noise", type=float, default=0.08)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None, help="optional artifact directory")
    args = ap.parse_args()

    dataset = {
        "kind": "synthetic-image",
        "side": args.side,
        "n_classes": args.classes,
        "n_train": args.train,
        "n_test": args.test,
        "noise": args.noise,
        "scramble": True,
    }
    train = {"epochs": args.epochs, "batch_size": 32, "lr": 0.003, "micro_batch": 8}
    experiments = {
        "smoke-eapcr": {
            "kind": "eapcr", "n_features": "auto", "vocab_size": "auto",
            "embed_size": 16, "conv_stack": [[4, 4, True], [4, 8, True]],
            "adaptive_out": 3, "residual_hidden": 16, "n_outputs": "auto",
            "dropout": 0.25,
        },
        "smoke-mlp": {
            "kind": "mlp", "n_features": "auto", "hidden": 24,
            "n_outputs": "auto", "dropout": 0.25,
        },
    }

    results = {}
    for name, model in experiments.items():
        config = {"name": name, "dataset": dataset, "model": model, "train": train}
        started = time.perf_counter()
        rec = run_experiment(config, seed=args.seed, out_dir=args.out)
        elapsed = time.perf_counter() - started
        results[name] = rec.best["metric"]["accuracy"]
        print(f"{name}: params {rec.param_count}, "
              f"best accuracy {results[name]:.4f} in {elapsed:.1f}s")

    margin = results["smoke-eapcr"] - results["smoke-mlp"]
    print(f"extractor margin over mlp: {margin:+.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
