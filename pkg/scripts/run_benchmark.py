#!/usr/bin/env python3
"""Shared-model LOSO comparison across alignment pipelines.

Runs No-EA / Offline-EA / Online-EA (plus the RA variants with --ra) on
the synthetic benchmark over several seeds and prints a mean +- std table
per pipeline. With --out, the full fold records, the accuracy table and
the pairwise permutation tests are written as artifacts.

At the default desk scale (8 subjects, 3 seeds, 120 epochs) this takes a
few minutes on a laptop.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from covalign.align import AlignmentPolicy
from covalign.harness import (
    run_shared_pipeline,
    write_accuracy_csv,
    write_results_json,
)
from covalign.neural import ModelConfig, TrainConfig
from covalign.stats import significance_matrix
from covalign.synth import make_benchmark


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--subjects", type=int, default=8)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--shift", default="strong", choices=("none", "weak", "strong"))
    ap.add_argument("--channels", type=int, default=4)
    ap.add_argument("--samples", type=int, default=128)
    ap.add_argument("--max-epochs", type=int, default=120)
    ap.add_argument("--patience", type=int, default=30)
    ap.add_argument("--lr", type=float, default=8.25e-4)
    ap.add_argument("--fine-tune", action="store_true")
    ap.add_argument("--ra", action="store_true", help="also run the Riemannian variants")
    ap.add_argument("--out", type=Path, help="write results/accuracy/stats artifacts here")
    return ap.parse_args()


def main():
    args = parse_args()
    model_cfg = ModelConfig(channels=args.channels, samples=args.samples)
    policies = [
        AlignmentPolicy("none", "euclidean", 24),
        AlignmentPolicy("offline_grouped", "euclidean", 24),
        AlignmentPolicy("pseudo_online", "euclidean", 24),
    ]
    if args.ra:
        policies += [
            AlignmentPolicy("offline_grouped", "riemannian", 24),
            AlignmentPolicy("pseudo_online", "riemannian", 24),
        ]

    per_pipeline: dict[str, dict[int, float]] = {}
    all_results = []
    for seed in args.seeds:
        dataset = make_benchmark(
            args.subjects, channels=args.channels, samples=args.samples,
            shift=args.shift, seed=seed,
        )
        cfg = TrainConfig(
            learning_rate=args.lr, weight_decay=1e-5, batch_size=64,
            max_epochs=args.max_epochs, patience=args.patience,
            dropout_rate=0.25, rng_seed=seed,
        )
        for policy in policies:
            result = run_shared_pipeline(
                dataset, policy, model_cfg, cfg, fine_tune=args.fine_tune
            )
            all_results.append(result)
            accs = per_pipeline.setdefault(result.pipeline_name, {})
            # key per (seed, subject) so seeds stay distinguishable
            for sid, acc in result.accuracies.items():
                accs[seed * 1000 + sid] = acc
            print(f"seed {seed}  {result.pipeline_name:14s} "
                  f"mean {result.mean_accuracy:.4f}", flush=True)

    print()
    print(f"{'pipeline':14s} {'mean':>8s} {'std':>8s}   (n = {args.subjects} subjects x {len(args.seeds)} seeds)")
    for name, accs in per_pipeline.items():
        vals = np.array(list(accs.values()))
        print(f"{name:14s} {vals.mean():8.4f} {vals.std(ddof=1):8.4f}")

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        write_results_json(all_results, args.out / "results.json")
        write_accuracy_csv(all_results, args.out / "accuracy.csv")
        matrix = significance_matrix(per_pipeline, n_perm=10000, rng_seed=0)
        import json

        with open(args.out / "stats.json", "w", encoding="utf-8") as fh:
            json.dump(matrix.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"\nartifacts in {args.out}")


if __name__ == "__main__":
    main()
