#!/usr/bin/env python3
"""Ensembles of individually trained models vs. a shared model.

Trains per-subject models once, then evaluates k-best ensembles for a
range of k on each held-out target, alongside the shared Online-EA model
for reference.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from covalign.align import AlignmentPolicy
from covalign.harness import (
    run_ensemble_pipeline,
    run_individual_models,
    run_shared_pipeline,
)
from covalign.neural import ModelConfig, TrainConfig
from covalign.synth import make_benchmark


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--subjects", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--k", type=int, nargs="+", default=[1, 3, 5])
    ap.add_argument("--max-epochs", type=int, default=120)
    ap.add_argument("--patience", type=int, default=30)
    return ap.parse_args()


def main():
    args = parse_args()
    dataset = make_benchmark(args.subjects, shift="strong", seed=args.seed)
    model_cfg = ModelConfig(channels=dataset.subjects[0].channels,
                            samples=dataset.subjects[0].samples)
    policy = AlignmentPolicy("pseudo_online", "euclidean", 24)

    indiv_cfg = TrainConfig(
        learning_rate=8.25e-4, weight_decay=1e-5, batch_size=64,
        max_epochs=args.max_epochs, patience=args.patience,
        dropout_rate=0.35, rng_seed=args.seed,
    )
    models, _ = run_individual_models(dataset, policy, model_cfg, indiv_cfg)

    print(f"{'pipeline':16s} {'mean':>8s} {'std':>8s}")
    for k in args.k:
        if k >= len(models):
            continue
        result = run_ensemble_pipeline(dataset, policy, model_cfg, indiv_cfg,
                                       k, models=models)
        print(f"{result.pipeline_name:16s} {result.mean_accuracy:8.4f} "
              f"{result.std_accuracy:8.4f}")

    shared_cfg = TrainConfig(
        learning_rate=8.25e-4, weight_decay=1e-5, batch_size=64,
        max_epochs=args.max_epochs, patience=args.patience,
        dropout_rate=0.25, rng_seed=args.seed,
    )
    shared = run_shared_pipeline(dataset, policy, model_cfg, shared_cfg)
    print(f"{shared.pipeline_name:16s} {shared.mean_accuracy:8.4f} "
          f"{shared.std_accuracy:8.4f}")


if __name__ == "__main__":
    main()
