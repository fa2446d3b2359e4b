"""Cross-subject evaluation: LOSO shared models, per-subject models, ensembles.

Three training schemes are orchestrated here. Shared models pool every
source subject and are evaluated on the held-out target (optionally with
linear-probe fine-tuning on the calibration runs). Individual models are
trained per subject and evaluated on every other subject, giving the
transfer matrix and its row/column summaries (transferability and
receivability). Ensembles combine individual models by weighted majority
vote, with members picked on the target's calibration run.

Leakage bookkeeping is explicit: every fold records (subject, trial)
id tuples for its train/val/calibration/test sets so disjointness can be
audited after the fact. The calibration run is excluded from scoring
whenever it informed the model (alignment reference in pseudo-online
mode, probing, or member selection).

Fold tasks are independent; each derives its RNG stream from
(global seed, target subject, pipeline name) and they run under the
shared worker pool. Results serialize to JSON (full fold records) and a
pipeline x subject accuracy CSV.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .align import AlignmentPolicy, align_offline, align_pseudo_online
from .neural import (
    ConvClassifier,
    ModelConfig,
    TrainConfig,
    TrainHistory,
    TrainingDivergedError,
    fine_tune_config,
    linear_probe,
    train,
)
from .trialdata import Dataset, Trial, TrialSet, split_train_val, trim_indices
from .util import config_hash, ordered_map, stable_seed

__all__ = [
    "SHARED_LR_GRID",
    "INDIVIDUAL_LR_GRID",
    "WEIGHT_DECAY_GRID",
    "FoldRecord",
    "PipelineResult",
    "TransferReport",
    "EnsembleSpec",
    "pipeline_name",
    "ensemble_name",
    "loso_folds",
    "run_shared_pipeline",
    "run_individual_models",
    "select_k_best",
    "ensemble_predict",
    "run_ensemble_pipeline",
    "grid_point_score",
    "grid_search",
    "convergence_epochs",
    "leakage_audit",
    "write_results_json",
    "write_accuracy_csv",
    "read_accuracy_csv",
]

# Hyperparameter search spaces (all values were published as multiples of 1e-4).
SHARED_LR_GRID = (6.25e-4, 8.25e-4, 10.0e-4, 12.5e-4)
INDIVIDUAL_LR_GRID = (7.25e-4, 8.25e-4, 9.25e-4, 10.0e-4, 12.5e-4)
WEIGHT_DECAY_GRID = (0.0, 0.10e-4, 1e-4)

TrialId = tuple[int, int]

_KIND_TAG = {"euclidean": "EA", "riemannian": "RA"}


@dataclass(frozen=True)
class FoldRecord:
    """One evaluation fold, with id tuples for the leakage audit."""

    target: int
    accuracy: float | None
    train_ids: tuple[TrialId, ...]
    val_ids: tuple[TrialId, ...]
    calib_ids: tuple[TrialId, ...]
    test_ids: tuple[TrialId, ...]
    history: TrainHistory | None = None
    probe_history: TrainHistory | None = None
    error: str | None = None

    def __post_init__(self):
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")


@dataclass(frozen=True)
class PipelineResult:
    """Per-target accuracies of one pipeline; failed folds carry errors."""

    pipeline_name: str
    accuracies: dict[int, float]
    folds: tuple[FoldRecord, ...]
    metadata: dict

    def __post_init__(self):
        for sid, acc in self.accuracies.items():
            if not 0.0 <= acc <= 1.0:
                raise ValueError(f"subject {sid}: accuracy {acc} outside [0, 1]")

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(list(self.accuracies.values())))

    @property
    def std_accuracy(self) -> float:
        vals = list(self.accuracies.values())
        return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0


@dataclass(frozen=True)
class TransferReport:
    """acc[s][t]: model of subject s evaluated on subject t.

    The diagonal holds each model's accuracy on its own full aligned set;
    it is reported but excluded from the row/column means.
    """

    subject_ids: tuple[int, ...]
    acc: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        n = len(self.subject_ids)
        if len(self.acc) != n or any(len(row) != n for row in self.acc):
            raise ValueError("transfer matrix must be square over subject_ids")
        if any(not 0.0 <= a <= 1.0 for row in self.acc for a in row):
            raise ValueError("transfer accuracies must lie in [0, 1]")

    def _mean_excluding_diagonal(self, axis: int) -> dict[int, float]:
        a = np.asarray(self.acc)
        mask = ~np.eye(len(self.subject_ids), dtype=bool)
        sums = np.where(mask, a, 0.0).sum(axis=axis)
        return {
            sid: float(sums[i] / (len(self.subject_ids) - 1))
            for i, sid in enumerate(self.subject_ids)
        }

    @property
    def transferability(self) -> dict[int, float]:
        """Row means: how well each subject's model travels."""
        return self._mean_excluding_diagonal(axis=1)

    @property
    def receivability(self) -> dict[int, float]:
        """Column means: how well each subject receives foreign models."""
        return self._mean_excluding_diagonal(axis=0)


@dataclass(frozen=True)
class EnsembleSpec:
    """Voting committee: member subject ids and their exp(accuracy) weights."""

    member_ids: tuple[int, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.member_ids) != len(self.weights) or not self.member_ids:
            raise ValueError("need one positive weight per member")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")


def pipeline_name(policy: AlignmentPolicy, fine_tune: bool = False) -> str:
    if policy.mode == "none":
        base = "No-EA"
    elif policy.mode == "offline_grouped":
        base = f"Offline-{_KIND_TAG[policy.kind]}"
    else:
        base = f"Online-{_KIND_TAG[policy.kind]}"
    return base + ("-FT" if fine_tune else "")


def ensemble_name(k: int, policy: AlignmentPolicy) -> str:
    base = "best-model" if k == 1 else f"{k}-models"
    if policy.mode == "none":
        return base
    return f"{base}-{_KIND_TAG[policy.kind]}"


def loso_folds(dataset: Dataset) -> list[tuple[int, tuple[int, ...]]]:
    """One (target, sources) fold per subject; sources are all the others."""
    sids = dataset.subject_ids
    if len(sids) < 2:
        raise ValueError("leave-one-subject-out needs at least 2 subjects")
    return [(t, tuple(s for s in sids if s != t)) for t in sids]


def _trim_tagged(
    ts: TrialSet, m: int, rng_seed: int
) -> tuple[TrialSet, list[TrialId]]:
    """Trim to a multiple of m, keeping (subject, original index) tags."""
    keep = trim_indices(ts.labels(), m, np.random.default_rng(rng_seed))
    trimmed = ts.with_trials(ts.trials[i] for i in keep)
    return trimmed, [(ts.subject_id, int(i)) for i in keep]


def _subject_view(
    dataset: Dataset, sid: int, policy: AlignmentPolicy, global_seed: int
) -> tuple[TrialSet, list[TrialId]]:
    """A subject's trials, trimmed and offline-aligned per the policy kind.

    The trim seed depends only on (global seed, subject), never on the
    pipeline, so every pipeline scores the same trial universe and paired
    per-subject comparisons stay meaningful.
    """
    trimmed, ids = _trim_tagged(
        dataset.subject(sid), policy.group_size, stable_seed(global_seed, "trim", sid)
    )
    if policy.mode != "none":
        trimmed = align_offline(trimmed, policy)
    return trimmed, ids


def _accuracy(model: ConvClassifier, trials: Sequence[Trial]) -> float:
    x = np.stack([t.data for t in trials])
    y = np.array([t.label for t in trials], dtype=int)
    return float(np.mean(model.predict(x) == y))


def _shared_fold(
    dataset: Dataset,
    target: int,
    sources: tuple[int, ...],
    policy: AlignmentPolicy,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    fine_tune: bool,
    name: str,
) -> FoldRecord:
    fold_seed = stable_seed(cfg.rng_seed, target, name)
    g = policy.group_size

    src_pairs: list[tuple[Trial, TrialId]] = []
    probe_pool: list[Trial] = []
    probe_ids: list[TrialId] = []
    for sid in sources:
        aligned, ids = _subject_view(dataset, sid, policy, cfg.rng_seed)
        src_pairs.extend(zip(aligned.trials, ids))
        if fine_tune:
            probe_pool.extend(aligned.trials[:g])
            probe_ids.extend(ids[:g])

    train_pairs, val_pairs = split_train_val(src_pairs, 0.2, stable_seed(fold_seed, "split"))
    train_trials = [tr for tr, _ in train_pairs]
    val_trials = [tr for tr, _ in val_pairs]
    train_ids = tuple(tid for _, tid in train_pairs)
    val_ids = tuple(tid for _, tid in val_pairs)

    # target trials per evaluation mode
    target_set, target_ids = _trim_tagged(
        dataset.subject(target), g, stable_seed(cfg.rng_seed, "trim", target)
    )
    if policy.mode == "pseudo_online":
        calib_set, rest_set = align_pseudo_online(target_set, policy)
        calib_trials = list(calib_set.trials)
        scored = list(rest_set.trials)
        scored_ids = target_ids[g:]
    else:
        if policy.mode == "offline_grouped":
            target_set = align_offline(target_set, policy)
        calib_trials = list(target_set.trials[:g])
        if fine_tune:
            scored = list(target_set.trials[g:])
            scored_ids = target_ids[g:]
        else:
            scored = list(target_set.trials)
            scored_ids = target_ids
    # the calibration run counts as consumed only when it informed the model
    calib_consumed = policy.mode == "pseudo_online" or fine_tune
    calib_ids = tuple(target_ids[:g]) if calib_consumed else ()

    if fine_tune:
        probe_pool = probe_pool + calib_trials
        probe_ids = probe_ids + list(target_ids[:g])

    model = ConvClassifier.init(model_cfg, stable_seed(fold_seed, "init"))
    probe_history = None
    try:
        model, history = train(
            model,
            train_trials,
            val_trials,
            replace(cfg, rng_seed=stable_seed(fold_seed, "train")),
        )
        if fine_tune:
            model, probe_history = linear_probe(
                model,
                probe_pool,
                replace(fine_tune_config(cfg), rng_seed=stable_seed(fold_seed, "probe")),
            )
        accuracy = _accuracy(model, scored)
        error = None
        history_out = history
    except TrainingDivergedError as exc:
        accuracy = None
        error = str(exc)
        history_out = None
    return FoldRecord(
        target=target,
        accuracy=accuracy,
        train_ids=train_ids,
        val_ids=val_ids,
        calib_ids=calib_ids,
        test_ids=tuple(scored_ids),
        history=history_out,
        probe_history=probe_history,
        error=error,
    )


def _collect(name, records, dataset, cfg, extra) -> PipelineResult:
    accs = {r.target: r.accuracy for r in records if r.accuracy is not None}
    failed = sorted(r.target for r in records if r.accuracy is None)
    if failed:
        warnings.warn(
            f"{name}: training diverged for target subjects {failed}; "
            f"means cover the remaining {len(accs)} folds"
        )
    metadata = {
        "dataset": dataset.name,
        "seed": cfg.rng_seed,
        "config_hash": config_hash(extra),
    }
    return PipelineResult(name, accs, tuple(records), metadata)


def run_shared_pipeline(
    dataset: Dataset,
    policy: AlignmentPolicy,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    fine_tune: bool = False,
    name: str | None = None,
) -> PipelineResult:
    """LOSO over the dataset with one shared model per fold.

    Sources are always trimmed to whole alignment groups and, unless the
    policy mode is "none", aligned group by group offline. The target is
    aligned per the policy mode. With fine_tune, the head is linear-probed
    on the first group of every source plus the target's calibration run,
    and that run is excluded from scoring.
    """
    name = name or pipeline_name(policy, fine_tune)
    folds = loso_folds(dataset)
    records = ordered_map(
        lambda fold: _shared_fold(
            dataset, fold[0], fold[1], policy, model_cfg, cfg, fine_tune, name
        ),
        folds,
    )
    extra = {
        "pipeline": name,
        "policy": (policy.mode, policy.kind, policy.group_size),
        "model": str(model_cfg),
        "train": str(cfg),
        "fine_tune": fine_tune,
    }
    return _collect(name, records, dataset, cfg, extra)


def run_individual_models(
    dataset: Dataset,
    policy: AlignmentPolicy,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    name: str | None = None,
) -> tuple[dict[int, ConvClassifier], TransferReport]:
    """One model per subject, evaluated on every subject's aligned data.

    Subjects whose training diverges are dropped from the report with a
    warning. acc[s][t] scores model s on subject t's full aligned set;
    the diagonal is each model's accuracy on its own data.
    """
    name = name or f"individual-{_KIND_TAG[policy.kind] if policy.mode != 'none' else 'raw'}"
    views = {
        sid: _subject_view(dataset, sid, policy, cfg.rng_seed)[0]
        for sid in dataset.subject_ids
    }

    def train_one(sid: int):
        fold_seed = stable_seed(cfg.rng_seed, sid, name)
        tr, va = split_train_val(views[sid], 0.2, stable_seed(fold_seed, "split"))
        model = ConvClassifier.init(model_cfg, stable_seed(fold_seed, "init"))
        try:
            model, _ = train(
                model, tr, va, replace(cfg, rng_seed=stable_seed(fold_seed, "train"))
            )
            return sid, model
        except TrainingDivergedError:
            return sid, None

    results = dict(ordered_map(train_one, list(dataset.subject_ids)))
    failed = sorted(s for s, m in results.items() if m is None)
    if failed:
        warnings.warn(f"{name}: training diverged for subjects {failed}; dropped")
    models = {s: m for s, m in results.items() if m is not None}
    kept = tuple(sorted(models))
    acc = tuple(
        tuple(_accuracy(models[s], views[t].trials) for t in kept) for s in kept
    )
    return models, TransferReport(subject_ids=kept, acc=acc)


def select_k_best(
    models: dict[int, ConvClassifier], calib_trials: Sequence[Trial], k: int
) -> EnsembleSpec:
    """Pick the k models with the best calibration accuracy.

    Ties break toward the lower subject id; weights are exp(accuracy).
    """
    if not 1 <= k <= len(models):
        raise ValueError(f"k={k} with {len(models)} models available")
    scores = {sid: _accuracy(m, calib_trials) for sid, m in models.items()}
    ranked = sorted(scores, key=lambda sid: (-scores[sid], sid))[:k]
    return EnsembleSpec(
        member_ids=tuple(ranked),
        weights=tuple(float(np.exp(scores[sid])) for sid in ranked),
    )


def ensemble_predict(
    spec: EnsembleSpec, models: dict[int, ConvClassifier], x: np.ndarray
) -> np.ndarray:
    """Weighted majority vote over member predictions, per trial."""
    n_classes = models[spec.member_ids[0]].config.n_classes
    tallies = np.zeros((len(x), n_classes))
    for sid, w in zip(spec.member_ids, spec.weights):
        votes = models[sid].predict(x)
        tallies[np.arange(len(x)), votes] += w
    return np.argmax(tallies, axis=1)


def run_ensemble_pipeline(
    dataset: Dataset,
    policy: AlignmentPolicy,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    k: int,
    models: dict[int, ConvClassifier] | None = None,
    name: str | None = None,
) -> PipelineResult:
    """Committee of individual models, members chosen per target.

    The target's first run is its calibration set: it picks the k best
    candidate models (the target's own model is never a candidate) and is
    excluded from scoring. Pass precomputed ``models`` to reuse one
    training round across several k.
    """
    name = name or ensemble_name(k, policy)
    if models is None:
        models, _ = run_individual_models(dataset, policy, model_cfg, cfg)
    g = policy.group_size
    records = []
    for target in dataset.subject_ids:
        candidates = {s: m for s, m in models.items() if s != target}
        target_set, target_ids = _trim_tagged(
            dataset.subject(target), g, stable_seed(cfg.rng_seed, "trim", target)
        )
        if policy.mode == "none":
            calib_trials = list(target_set.trials[:g])
            scored = list(target_set.trials[g:])
        else:
            calib_set, rest_set = align_pseudo_online(target_set, policy)
            calib_trials = list(calib_set.trials)
            scored = list(rest_set.trials)
        spec = select_k_best(candidates, calib_trials, k)
        x = np.stack([t.data for t in scored])
        y = np.array([t.label for t in scored], dtype=int)
        accuracy = float(np.mean(ensemble_predict(spec, candidates, x) == y))
        records.append(
            FoldRecord(
                target=target,
                accuracy=accuracy,
                train_ids=(),
                val_ids=(),
                calib_ids=tuple(target_ids[:g]),
                test_ids=tuple(target_ids[g:]),
            )
        )
    extra = {
        "pipeline": name,
        "k": k,
        "policy": (policy.mode, policy.kind, policy.group_size),
        "train": str(cfg),
    }
    return _collect(name, records, dataset, cfg, extra)


def grid_point_score(
    dataset: Dataset,
    policy: AlignmentPolicy,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    learning_rate: float,
    weight_decay: float,
) -> float:
    """Mean held-out-subject accuracy of one (lr, wd) configuration.

    Leave-one-group-out over the source pool: each subject is held out
    once, the model trains on the rest and is scored on the holdout's
    aligned data. Fold seeds do not depend on (lr, wd), so every
    configuration sees identical shuffles. A diverged fold scores the
    whole configuration 0.
    """
    point = replace(cfg, learning_rate=learning_rate, weight_decay=weight_decay)
    accs = []
    for held_out, rest in loso_folds(dataset):
        fold_seed = stable_seed(cfg.rng_seed, held_out, "grid")
        pool: list[Trial] = []
        for sid in rest:
            pool.extend(_subject_view(dataset, sid, policy, cfg.rng_seed)[0].trials)
        tr, va = split_train_val(pool, 0.2, stable_seed(fold_seed, "split"))
        model = ConvClassifier.init(model_cfg, stable_seed(fold_seed, "init"))
        try:
            model, _ = train(
                model, tr, va, replace(point, rng_seed=stable_seed(fold_seed, "train"))
            )
        except TrainingDivergedError:
            return 0.0
        view, _ = _subject_view(dataset, held_out, policy, cfg.rng_seed)
        accs.append(_accuracy(model, view.trials))
    return float(np.mean(accs))


def grid_search(
    dataset: Dataset,
    policy: AlignmentPolicy,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    learning_rates: Sequence[float] = SHARED_LR_GRID,
    weight_decays: Sequence[float] = WEIGHT_DECAY_GRID,
) -> tuple[float, float]:
    """Best (learning rate, weight decay) by mean held-out accuracy.

    Ties resolve toward the smaller learning rate, then the smaller decay.
    """
    if not learning_rates or not weight_decays:
        raise ValueError("search space must be nonempty")
    best: tuple[float, float, float] | None = None
    for lr in sorted(learning_rates):
        for wd in sorted(weight_decays):
            score = grid_point_score(dataset, policy, model_cfg, cfg, lr, wd)
            if best is None or score > best[0]:
                best = (score, lr, wd)
    return best[1], best[2]


def convergence_epochs(history: TrainHistory, frac: float) -> int:
    """First epoch whose validation accuracy reaches frac of the peak."""
    if not 0.0 < frac <= 1.0:
        raise ValueError(f"frac must be in (0, 1], got {frac}")
    acc = np.asarray(history.val_acc)
    if acc.size == 0:
        raise ValueError("empty history")
    return int(np.argmax(acc >= frac * acc.max()))


def leakage_audit(result: PipelineResult) -> None:
    """Raise if any fold mixes trials across train/val/calibration/test.

    Checks, per fold: the target's trials never occur in the training or
    validation sets; train and val are disjoint; the calibration run (when
    consumed) never overlaps the scored test set.
    """
    for f in result.folds:
        train, val = set(f.train_ids), set(f.val_ids)
        calib, test = set(f.calib_ids), set(f.test_ids)
        target_leaks = {t for t in (train | val) if t[0] == f.target}
        if target_leaks:
            raise ValueError(
                f"{result.pipeline_name}, target {f.target}: target trials "
                f"{sorted(target_leaks)} found in train/val"
            )
        if train & val:
            raise ValueError(
                f"{result.pipeline_name}, target {f.target}: train/val overlap"
            )
        if calib & test:
            raise ValueError(
                f"{result.pipeline_name}, target {f.target}: calibration trials "
                f"{sorted(calib & test)} appear in the test set"
            )


# ---------------------------------------------------------------------------
# result artifacts


def _history_dict(h: TrainHistory | None) -> dict | None:
    if h is None:
        return None
    return {
        "train_loss": list(h.train_loss),
        "val_loss": list(h.val_loss),
        "val_acc": list(h.val_acc),
        "best_epoch": h.best_epoch,
    }


def write_results_json(results: Sequence[PipelineResult], path) -> None:
    """Full fold records, deterministic layout (no timestamps)."""
    doc = {
        "results": [
            {
                "pipeline": r.pipeline_name,
                "accuracies": {str(s): a for s, a in sorted(r.accuracies.items())},
                "metadata": r.metadata,
                "folds": [
                    {
                        "target": f.target,
                        "accuracy": f.accuracy,
                        "train_ids": [list(t) for t in f.train_ids],
                        "val_ids": [list(t) for t in f.val_ids],
                        "calib_ids": [list(t) for t in f.calib_ids],
                        "test_ids": [list(t) for t in f.test_ids],
                        "history": _history_dict(f.history),
                        "probe_history": _history_dict(f.probe_history),
                        "error": f.error,
                    }
                    for f in r.folds
                ],
            }
            for r in results
        ]
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_accuracy_csv(results: Sequence[PipelineResult], path) -> None:
    """Pipeline x subject accuracy table (shortest-round-trip floats)."""
    sids = sorted({s for r in results for s in r.accuracies})
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pipeline"] + [str(s) for s in sids])
        for r in results:
            writer.writerow(
                [r.pipeline_name]
                + [repr(r.accuracies[s]) if s in r.accuracies else "" for s in sids]
            )


def read_accuracy_csv(path) -> dict[str, dict[int, float]]:
    """Inverse of write_accuracy_csv: pipeline -> subject -> accuracy."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["pipeline"]:
        raise ValueError(f"{path}: not an accuracy table")
    sids = [int(s) for s in rows[0][1:]]
    out: dict[str, dict[int, float]] = {}
    for row in rows[1:]:
        out[row[0]] = {
            sid: float(cell) for sid, cell in zip(sids, row[1:]) if cell != ""
        }
    return out
