"""Tabular benchmarks: extractor vs mlp on the three csv datasets.

For each dataset present under --data-dir this runs the paired experiment
configs (configs/experiments/<name>-{eapcr,mlp}.json) over --seeds seeds,
prints mean and spread of the primary metric, and writes an aggregate CSV.
Missing csv files are skipped with a note, so the script is safe to run on a
partial data directory.

Records are cached under --out with the same naming the acceptance suite
uses, so the two share training effort.
"""

import argparse
import csv
import json
import os
import statistics
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from eapcr.harness import RunRecord, run_experiment  # noqa: E402

DATASETS = {
    "heart": ("accuracy", 0.93),
    "catalysis": ("r2", 0.937),
    "sensor": ("accuracy", 0.8942),
}


def cached_run(out_dir, name, config, seed):
    path = os.path.join(out_dir, f"{name}-seed{seed}.json")
    if os.path.exists(path):
        with open(path) as fh:
            return RunRecord.from_json(fh.read())
    config = dict(config, name=name)
    return run_experiment(config, seed=seed, out_dir=out_dir, reproducible=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir", default="data")
    ap.add_argument("--config-dir", default="configs/experiments")
    ap.add_argument("--out", default="runs/acceptance")
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    rows = []
    for name, (metric, target) in DATASETS.items():
        csv_path = os.path.join(args.data_dir, f"{name}.csv")
        if not os.path.exists(csv_path):
            print(f"{name}: no {csv_path}, skipping")
            continue
        means = {}
        for kind in ("eapcr", "mlp"):
            with open(os.path.join(args.config_dir, f"{name}-{kind}.json")) as fh:
                config = json.load(fh)
            # configs carry repo-relative paths; honor --data-dir overrides
            config["dataset"]["path"] = csv_path
            values = []
            for seed in range(args.seeds):
                rec = cached_run(args.out, f"{name}-{kind}", config, seed)
                values.append(rec.best["metric"][metric])
            mean = statistics.mean(values)
            spread = statistics.stdev(values) if len(values) > 1 else 0.0
            means[kind] = mean
            rows.append([name, kind, metric, f"{mean:.4f}", f"{spread:.4f}", args.seeds])
            print(f"{name}-{kind}: {metric} {mean:.4f} +/- {spread:.4f} over {args.seeds} seeds")
        print(f"{name}: target {metric} ~{target}; extractor-vs-mlp margin "
              f"{means['eapcr'] - means['mlp']:+.4f}")

    if not rows:
        print("nothing ran; see README for the expected csv layout", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    summary = os.path.join(args.out, "tabular-summary.csv")
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "model", "metric", "mean", "stdev", "seeds"])
        w.writerows(rows)
    print(f"summary written to {summary}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
