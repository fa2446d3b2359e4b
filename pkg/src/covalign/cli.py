"""Command-line front end for the full pipeline.

Every subcommand reads/writes the documented artifact formats (EEGB
datasets with a JSON manifest, model checkpoints, JSON/CSV result tables)
and drops a ``run_manifest.json`` into its output directory recording the
resolved configuration, its hash, the seed and the produced files. The
manifest is the only artifact carrying a timestamp — everything else is
byte-reproducible from the same inputs and seed.

Options may also come from a JSON config file (``--config``); explicit
flags win over file values, which win over built-in defaults.

Exit codes:
  0  success
  1  unexpected internal error
  2  usage error (bad flags)
  3  input file or directory missing
  4  malformed or inconsistent input data
  5  numerical failure (non-SPD covariance, diverged training, ...)

``COVALIGN_THREADS`` caps worker parallelism for fold-level tasks.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .align import AlignmentPolicy, align_offline, align_pseudo_online
from .dsp import FilterSpec, preprocess_trialset
from .harness import (
    SHARED_LR_GRID,
    WEIGHT_DECAY_GRID,
    ensemble_name,
    grid_search,
    run_ensemble_pipeline,
    run_individual_models,
    run_shared_pipeline,
    write_accuracy_csv,
    write_results_json,
    read_accuracy_csv,
)
from .neural import (
    ModelConfig,
    TrainConfig,
    TrainingDivergedError,
    load_checkpoint,
    save_checkpoint,
)
from .spdcore import ConvergenceError, NearSingularError, NotSpdError
from .stats import significance_matrix
from .synth import make_benchmark
from .trialdata import (
    Dataset,
    FormatError,
    load_dataset,
    trim_to_multiple,
    write_dataset,
)
from .util import config_hash, stable_seed

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_BAD_DATA = 4
EXIT_NUMERICAL = 5

_EXIT_TABLE = """\
exit codes:
  0  success
  1  unexpected internal error
  2  usage error
  3  input file missing
  4  malformed input data
  5  numerical failure
"""


def _load_config_file(path: str | None, allowed: set[str]) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    try:
        values = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(values, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    unknown = set(values) - allowed
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    return values


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge flag values over config-file values over defaults."""
    fromfile = _load_config_file(getattr(args, "config", None), set(defaults))
    out = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else fromfile.get(key, default)
    return out


def _policy(cfg: dict) -> AlignmentPolicy:
    return AlignmentPolicy(cfg["mode"], cfg["kind"], cfg["group_size"])


def _model_config(dataset: Dataset, cfg: dict) -> ModelConfig:
    probe = dataset.subjects[0]
    return ModelConfig(
        channels=probe.channels,
        samples=probe.samples,
        temporal_filters=cfg["temporal_filters"],
        kernel_len=cfg["kernel_len"],
        spatial_filters=cfg["spatial_filters"],
        pool_len=cfg["pool_len"],
        pool_stride=cfg["pool_stride"],
    )


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg["lr"],
        weight_decay=cfg["weight_decay"],
        batch_size=cfg["batch_size"],
        max_epochs=cfg["max_epochs"],
        patience=cfg["patience"],
        dropout_rate=cfg["dropout"],
        rng_seed=cfg["seed"],
    )


# --------------------------------------------------------------------------
# subcommands: each returns (out_dir, config dict, list of artifact names)


SYNTH_DEFAULTS = {
    "subjects": 8,
    "channels": 4,
    "samples": 128,
    "trials_per_class": 24,
    "shift": "strong",
    "class_gap": None,  # synth module default
    "noise_std": None,
    "fs": 250.0,
    "seed": 0,
}


def cmd_synth(args) -> tuple[Path, dict, list[str]]:
    cfg = _resolve(args, SYNTH_DEFAULTS)
    extra = {}
    if cfg["class_gap"] is not None:
        extra["class_gap"] = cfg["class_gap"]
    if cfg["noise_std"] is not None:
        extra["noise_std"] = cfg["noise_std"]
    dataset = make_benchmark(
        cfg["subjects"],
        channels=cfg["channels"],
        samples=cfg["samples"],
        trials_per_class=cfg["trials_per_class"],
        shift=cfg["shift"],
        fs=cfg["fs"],
        seed=cfg["seed"],
        **extra,
    )
    out = Path(args.out)
    manifest = write_dataset(dataset, out)
    return out, cfg, [manifest.name] + sorted(
        p.name for p in out.glob("*.eegb")
    )


PREPROCESS_DEFAULTS = {
    "low": 8.0,
    "high": 32.0,
    "taps": 251,
    "resample_to": 250.0,
    "block_size": 4096,
}


def cmd_preprocess(args) -> tuple[Path, dict, list[str]]:
    cfg = _resolve(args, PREPROCESS_DEFAULTS)
    dataset = load_dataset(args.data)
    fs = dataset.subjects[0].fs
    spec = FilterSpec(cfg["low"], cfg["high"], fs, cfg["taps"])
    resample_to = cfg["resample_to"] if cfg["resample_to"] != fs else None
    processed = [
        preprocess_trialset(ts, spec, resample_to, cfg["block_size"])
        for ts in dataset.subjects
    ]
    out = Path(args.out)
    manifest = write_dataset(
        Dataset(name=f"{dataset.name}-filtered", subjects=tuple(processed)), out
    )
    cfg["data"] = str(args.data)
    return out, cfg, [manifest.name] + sorted(p.name for p in out.glob("*.eegb"))


ALIGN_DEFAULTS = {
    "mode": "offline_grouped",
    "kind": "euclidean",
    "group_size": 24,
    "ridge": 0.0,
    "seed": 0,
}


def cmd_align(args) -> tuple[Path, dict, list[str]]:
    cfg = _resolve(args, ALIGN_DEFAULTS)
    dataset = load_dataset(args.data)
    policy = _policy(cfg)
    aligned = []
    for ts in dataset.subjects:
        trimmed = trim_to_multiple(
            ts, policy.group_size, stable_seed(cfg["seed"], "trim", ts.subject_id)
        )
        if cfg["mode"] == "none":
            aligned.append(trimmed)
        elif cfg["mode"] == "pseudo_online":
            calib, rest = align_pseudo_online(trimmed, policy, cfg["ridge"])
            aligned.append(trimmed.with_trials(calib.trials + rest.trials))
        else:
            aligned.append(align_offline(trimmed, policy, cfg["ridge"]))
    out = Path(args.out)
    manifest = write_dataset(
        Dataset(name=f"{dataset.name}-aligned", subjects=tuple(aligned)), out
    )
    cfg["data"] = str(args.data)
    return out, cfg, [manifest.name] + sorted(p.name for p in out.glob("*.eegb"))


_MODEL_DEFAULTS = {
    "temporal_filters": 8,
    "kernel_len": 25,
    "spatial_filters": 8,
    "pool_len": 32,
    "pool_stride": 8,
}

TRAIN_SHARED_DEFAULTS = {
    "mode": "offline_grouped",
    "kind": "euclidean",
    "group_size": 24,
    "fine_tune": False,
    "grid": False,
    "lr": 8.25e-4,
    "weight_decay": 1e-5,
    "batch_size": 64,
    "max_epochs": 1000,
    "patience": 250,
    "dropout": 0.25,
    "seed": 0,
    "name": None,
    **_MODEL_DEFAULTS,
}


def cmd_train_shared(args) -> tuple[Path, dict, list[str]]:
    cfg = _resolve(args, TRAIN_SHARED_DEFAULTS)
    dataset = load_dataset(args.data)
    policy = _policy(cfg)
    model_cfg = _model_config(dataset, cfg)
    train_cfg = _train_config(cfg)
    if cfg["grid"]:
        lr, wd = grid_search(dataset, policy, model_cfg, train_cfg,
                             SHARED_LR_GRID, WEIGHT_DECAY_GRID)
        cfg["lr"], cfg["weight_decay"] = lr, wd
        train_cfg = replace(train_cfg, learning_rate=lr, weight_decay=wd)
    result = run_shared_pipeline(
        dataset, policy, model_cfg, train_cfg,
        fine_tune=cfg["fine_tune"], name=cfg["name"],
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_results_json([result], out / "results.json")
    write_accuracy_csv([result], out / "accuracy.csv")
    cfg["data"] = str(args.data)
    return out, cfg, ["results.json", "accuracy.csv"]


TRAIN_INDIVIDUAL_DEFAULTS = {
    "mode": "offline_grouped",
    "kind": "euclidean",
    "group_size": 24,
    "lr": 8.25e-4,
    "weight_decay": 1e-5,
    "batch_size": 64,
    "max_epochs": 1000,
    "patience": 250,
    "dropout": 0.35,
    "seed": 0,
    **_MODEL_DEFAULTS,
}


def cmd_train_individual(args) -> tuple[Path, dict, list[str]]:
    cfg = _resolve(args, TRAIN_INDIVIDUAL_DEFAULTS)
    dataset = load_dataset(args.data)
    policy = _policy(cfg)
    models, report = run_individual_models(
        dataset, policy, _model_config(dataset, cfg), _train_config(cfg)
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for sid, model in sorted(models.items()):
        name = f"subject{sid:03d}.ckpt"
        save_checkpoint(model, out / name, extra={"subject": sid})
        outputs.append(name)
    with open(out / "transfer.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "subject_ids": list(report.subject_ids),
                "acc": [list(row) for row in report.acc],
                "transferability": {str(s): v for s, v in report.transferability.items()},
                "receivability": {str(s): v for s, v in report.receivability.items()},
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    outputs.append("transfer.json")
    cfg["data"] = str(args.data)
    return out, cfg, outputs


ENSEMBLE_DEFAULTS = {
    "mode": "pseudo_online",
    "kind": "euclidean",
    "group_size": 24,
    "k": 3,
    "seed": 0,
}


def cmd_ensemble(args) -> tuple[Path, dict, list[str]]:
    cfg = _resolve(args, ENSEMBLE_DEFAULTS)
    dataset = load_dataset(args.data)
    models_dir = Path(args.models)
    if not models_dir.is_dir():
        raise FileNotFoundError(f"{models_dir}: no such model directory")
    models = {}
    for path in sorted(models_dir.glob("subject*.ckpt")):
        sid = int(path.stem.removeprefix("subject"))
        models[sid] = load_checkpoint(path)
    if not models:
        raise FileNotFoundError(f"{models_dir}: no subject*.ckpt checkpoints")
    policy = _policy(cfg)
    train_cfg = TrainConfig(rng_seed=cfg["seed"])
    result = run_ensemble_pipeline(
        dataset, policy, models[next(iter(models))].config, train_cfg,
        cfg["k"], models=models,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_results_json([result], out / "results.json")
    write_accuracy_csv([result], out / "accuracy.csv")
    cfg["data"] = str(args.data)
    cfg["models"] = str(args.models)
    return out, cfg, ["results.json", "accuracy.csv"]


STATS_DEFAULTS = {"n_perm": 10000, "seed": 0}


def cmd_stats(args) -> tuple[Path, dict, list[str]]:
    cfg = _resolve(args, STATS_DEFAULTS)
    pipelines: dict[str, dict[int, float]] = {}
    for path in args.results:
        for name, accs in read_accuracy_csv(path).items():
            if name in pipelines:
                raise ValueError(f"duplicate pipeline {name!r} across result files")
            pipelines[name] = accs
    matrix = significance_matrix(pipelines, n_perm=cfg["n_perm"], rng_seed=cfg["seed"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "stats.json", "w", encoding="utf-8") as fh:
        json.dump(matrix.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    cfg["results"] = [str(p) for p in args.results]
    return out, cfg, ["stats.json"]


def cmd_report(args) -> tuple[Path, dict, list[str]]:
    docs = []
    for path in args.results:
        with open(path, "r", encoding="utf-8") as fh:
            docs.extend(json.load(fh)["results"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    import csv as _csv

    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["pipeline", "n_subjects", "mean_accuracy", "std_accuracy"])
        for doc in docs:
            accs = [float(a) for a in doc["accuracies"].values()]
            if not accs:
                writer.writerow([doc["pipeline"], 0, "", ""])
                continue
            mean = sum(accs) / len(accs)
            if len(accs) > 1:
                var = sum((a - mean) ** 2 for a in accs) / (len(accs) - 1)
            else:
                var = 0.0
            writer.writerow([doc["pipeline"], len(accs), repr(mean), repr(var**0.5)])

    with open(out / "distributions.csv", "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["pipeline", "subject", "accuracy"])
        for doc in docs:
            for sid, acc in sorted(doc["accuracies"].items(), key=lambda kv: int(kv[0])):
                writer.writerow([doc["pipeline"], sid, repr(float(acc))])

    with open(out / "learning_curves.csv", "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["pipeline", "target", "epoch", "train_loss", "val_loss", "val_acc"])
        for doc in docs:
            for fold in doc["folds"]:
                hist = fold.get("history")
                if not hist:
                    continue
                for e, (tl, vl, va) in enumerate(
                    zip(hist["train_loss"], hist["val_loss"], hist["val_acc"])
                ):
                    writer.writerow(
                        [doc["pipeline"], fold["target"], e, repr(tl), repr(vl), repr(va)]
                    )

    cfg = {"results": [str(p) for p in args.results]}
    return out, cfg, ["summary.csv", "distributions.csv", "learning_curves.csv"]


# --------------------------------------------------------------------------


def _add_common(sub, *, data=True):
    if data:
        sub.add_argument("--data", required=True, help="dataset manifest.json")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--config", help="JSON config file (flags win)")


def _add_policy_flags(sub, modes=("offline_grouped", "pseudo_online", "none")):
    sub.add_argument("--mode", choices=modes)
    sub.add_argument("--kind", choices=("euclidean", "riemannian"))
    sub.add_argument("--group-size", dest="group_size", type=int)


def _add_train_flags(sub):
    sub.add_argument("--lr", type=float)
    sub.add_argument("--weight-decay", dest="weight_decay", type=float)
    sub.add_argument("--batch-size", dest="batch_size", type=int)
    sub.add_argument("--max-epochs", dest="max_epochs", type=int)
    sub.add_argument("--patience", type=int)
    sub.add_argument("--dropout", type=float)
    sub.add_argument("--seed", type=int)
    for flag in ("temporal-filters", "kernel-len", "spatial-filters", "pool-len", "pool-stride"):
        sub.add_argument(f"--{flag}", dest=flag.replace("-", "_"), type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covalign",
        description="Euclidean and Riemannian trial alignment for cross-subject EEG decoding.",
        epilog=_EXIT_TABLE,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"covalign {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="generate a synthetic benchmark dataset")
    _add_common(p, data=False)
    p.add_argument("--subjects", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--trials-per-class", dest="trials_per_class", type=int)
    p.add_argument("--shift", choices=("none", "weak", "strong"))
    p.add_argument("--class-gap", dest="class_gap", type=float)
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--fs", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("preprocess", help="band-pass filter and resample a dataset")
    _add_common(p)
    p.add_argument("--low", type=float)
    p.add_argument("--high", type=float)
    p.add_argument("--taps", type=int)
    p.add_argument("--resample-to", dest="resample_to", type=float)
    p.add_argument("--block-size", dest="block_size", type=int)
    p.set_defaults(func=cmd_preprocess)

    p = subs.add_parser("align", help="write an aligned copy of a dataset")
    _add_common(p)
    _add_policy_flags(p)
    p.add_argument("--ridge", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_align)

    p = subs.add_parser("train-shared", help="LOSO shared-model evaluation")
    _add_common(p)
    _add_policy_flags(p)
    p.add_argument("--fine-tune", dest="fine_tune", action=argparse.BooleanOptionalAction)
    p.add_argument("--grid", action=argparse.BooleanOptionalAction,
                   help="run the hyperparameter grid first, train with the winner")
    p.add_argument("--name", help="override the pipeline name in the artifacts")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_shared)

    p = subs.add_parser("train-individual", help="per-subject models and transfer matrix")
    _add_common(p)
    _add_policy_flags(p, modes=("offline_grouped", "none"))
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_individual)

    p = subs.add_parser("ensemble", help="weighted majority-vote committee evaluation")
    _add_common(p)
    p.add_argument("--models", required=True, help="directory of subject*.ckpt files")
    p.add_argument("--k", type=int)
    p.add_argument("--mode", choices=("pseudo_online", "none"))
    p.add_argument("--kind", choices=("euclidean", "riemannian"))
    p.add_argument("--group-size", dest="group_size", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_ensemble)

    p = subs.add_parser("stats", help="pairwise permutation tests across pipelines")
    p.add_argument("--results", required=True, nargs="+", help="accuracy.csv files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="JSON config file (flags win)")
    p.add_argument("--n-perm", dest="n_perm", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_stats)

    p = subs.add_parser("report", help="summary tables and plot-ready CSVs")
    p.add_argument("--results", required=True, nargs="+", help="results.json files")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)

    return parser


def _write_manifest(out_dir: Path, command: str, cfg: dict, outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "config_hash": config_hash({"command": command, **cfg}),
        "version": __version__,
        "outputs": outputs,
        "created": datetime.now(timezone.utc).isoformat(),
    }
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if not exc.code else int(exc.code)
    try:
        out_dir, cfg, outputs = args.func(args)
        _write_manifest(out_dir, args.command, cfg, outputs)
    except FileNotFoundError as exc:
        print(f"covalign {args.command}: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except (NotSpdError, NearSingularError, ConvergenceError, TrainingDivergedError) as exc:
        print(f"covalign {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FormatError, ValueError) as exc:
        print(f"covalign {args.command}: {exc}", file=sys.stderr)
        return EXIT_BAD_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"covalign {args.command}: unexpected error: {exc!r}", file=sys.stderr)
        return EXIT_UNEXPECTED
    for name in outputs:
        print(out_dir / name)
    return EXIT_OK
