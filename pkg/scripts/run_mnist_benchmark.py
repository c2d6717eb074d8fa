"""Scrambled-digit benchmark: the attention extractor and its baselines.

Trains five models (extractor, no-permutation variant, mlp, plain cnn on raw
and on scrambled layouts) on disjoint train/test subsets and prints the
accuracy table plus the two ordering checks that matter:

  - the extractor must beat the mlp on scrambled images
  - the plain cnn must lose accuracy when the layout is scrambled

Finished runs are cached as RunRecord JSON under --out and reused, so the
acceptance suite (and re-invocations) can share the same records. Exits 1 if
an ordering check fails.

With --perm-study (full profile only) also trains designed-vs-random
permutation pairs over three seeds.
"""

import argparse
import csv
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from eapcr.harness import RunRecord, run_experiment  # noqa: E402

PROFILES = {
    "smoke": {"n_train": 5000, "n_test": 1000, "epochs": 20},
    "full": {"n_train": 30000, "n_test": 5000, "epochs": 100},
}

ENTRIES = [
    ("eapcr1", "image-eapcr-1", True),
    ("eacr1", "image-eacr-1", True),
    ("mlp1", "image-mlp-1", True),
    ("cnn-raw", "image-cnn", False),
    ("cnn-synth", "image-cnn", True),
]


def build_config(data_dir, model, scramble, profile):
    p = PROFILES[profile]
    return {
        "dataset": {
            "kind": "image",
            "images": os.path.join(data_dir, "train-images-idx3-ubyte"),
            "labels": os.path.join(data_dir, "train-labels-idx1-ubyte"),
            "scramble": scramble,
            "n_train": p["n_train"],
            "n_test": p["n_test"],
        },
        "model": model,
        "train": {"epochs": p["epochs"], "batch_size": 64, "lr": 0.003, "micro_batch": 8},
    }


def cached_run(out_dir, name, config, seed, verbose):
    path = os.path.join(out_dir, f"{name}-seed{seed}.json")
    if os.path.exists(path):
        with open(path) as fh:
            rec = RunRecord.from_json(fh.read())
        print(f"[cached] {name} seed {seed}: best {rec.best['metric']['_primary']:.4f}")
        return rec
    config = dict(config, name=name)
    rec = run_experiment(config, seed=seed, out_dir=out_dir, reproducible=True,
                         verbose=verbose)
    print(f"[trained] {name} seed {seed}: best {rec.best['metric']['_primary']:.4f} "
          f"({rec.wall_time_s / 60:.1f} min)")
    return rec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir", default="data/mnist",
                    help="directory holding train-images-idx3-ubyte and train-labels-idx1-ubyte")
    ap.add_argument("--profile", choices=sorted(PROFILES), default="smoke")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/acceptance",
                    help="record/checkpoint directory (shared with the acceptance suite)")
    ap.add_argument("--perm-study", action="store_true",
                    help="also run designed-vs-random permutation pairs, seeds 0..2 (full profile)")
    ap.add_argument("--quiet", action="store_true")
    args = ap.parse_args()

    images = os.path.join(args.data_dir, "train-images-idx3-ubyte")
    if not os.path.exists(images):
        print(f"missing {images}; see README for where to put the digit files", file=sys.stderr)
        return 2

    records = []
    acc = {}
    for key, preset, scramble in ENTRIES:
        name = f"{key}-{args.profile}"
        cfg = build_config(args.data_dir, preset, scramble, args.profile)
        rec = cached_run(args.out, name, cfg, args.seed, not args.quiet)
        records.append(rec)
        acc[key] = rec.best["metric"]["accuracy"]

    if args.perm_study:
        if args.profile != "full":
            print("--perm-study is defined for --profile full only", file=sys.stderr)
            return 2
        from eapcr.model import config_to_dict
        from eapcr.harness import MODEL_PRESETS

        designed, random_ = [], []
        for seed in (0, 1, 2):
            cfg = build_config(args.data_dir, "image-eapcr-1", True, "full")
            rec = cached_run(args.out, "perm-designed-full", cfg, seed, not args.quiet)
            designed.append(rec.best["metric"]["accuracy"])
            records.append(rec)
            model = config_to_dict(MODEL_PRESETS["image-eapcr-1"]())
            model["permutation"] = f"random:{seed}"
            cfg = build_config(args.data_dir, model, True, "full")
            rec = cached_run(args.out, "perm-random-full", cfg, seed, not args.quiet)
            random_.append(rec.best["metric"]["accuracy"])
            records.append(rec)
        print(f"designed mean {sum(designed) / 3:.4f}  random mean {sum(random_) / 3:.4f}")

    os.makedirs(args.out, exist_ok=True)
    summary = os.path.join(args.out, f"mnist-{args.profile}-summary.csv")
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "seed", "params", "best_accuracy", "final_accuracy", "minutes"])
        for rec in records:
            w.writerow([rec.name, rec.seed, rec.param_count,
                        f"{rec.best['metric']['accuracy']:.4f}",
                        f"{rec.final['metric']['accuracy']:.4f}",
                        f"{rec.wall_time_s / 60:.2f}"])
    print(f"summary written to {summary}")

    print()
    for key, _, _ in ENTRIES:
        print(f"  {key:10s} {acc[key]:.4f}")
    ok = True
    if acc["eapcr1"] > acc["mlp1"]:
        print("ordering ok: extractor > mlp on scrambled images")
    else:
        print("ORDERING VIOLATED: extractor <= mlp on scrambled images")
        ok = False
    if acc["cnn-raw"] > acc["cnn-synth"]:
        print("ordering ok: plain cnn drops under scrambling")
    else:
        print("ORDERING VIOLATED: plain cnn did not drop under scrambling")
        ok = False
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
