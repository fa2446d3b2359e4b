"""Covariance-based trial alignment.

Each subject's trials are whitened by the inverse square root of a
reference covariance so that sensor-space statistics become comparable
across subjects. The reference is either the arithmetic mean of trial
covariances (Euclidean alignment: the whitened trials have identity mean
covariance) or their geometric mean under the affine-invariant metric
(Riemannian recentering: the whitened covariances have identity
geometric mean).

Two usage modes: offline alignment recenters consecutive fixed-size
groups on their own statistics; pseudo-online alignment estimates one
reference from an initial calibration group and applies it causally to
everything that follows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spdcore import NotSpdError, arithmetic_mean, invsqrtm, karcher_mean
from .trialdata import Trial, TrialSet

__all__ = [
    "AlignmentPolicy",
    "ReferenceMatrix",
    "trial_covariance",
    "euclidean_reference",
    "riemannian_reference",
    "make_reference",
    "apply_reference",
    "align_offline",
    "align_pseudo_online",
]

MODES = ("offline_grouped", "pseudo_online", "none")
KINDS = ("euclidean", "riemannian")


@dataclass(frozen=True)
class AlignmentPolicy:
    """What to align with (kind), how to batch it (mode, group_size)."""

    mode: str
    kind: str = "euclidean"
    group_size: int = 24

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")


@dataclass(frozen=True)
class ReferenceMatrix:
    """A reference covariance and its whitening transform."""

    kind: str
    matrix: np.ndarray
    whitener: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        ident = self.whitener @ self.matrix @ self.whitener
        if np.linalg.norm(ident - np.eye(len(ident))) > 1e-8:
            raise ValueError("whitener does not invert the reference (W R W != I)")


def trial_covariance(trial, ridge: float = 0.0) -> np.ndarray:
    """Sample covariance X X^T / t of one trial, symmetrised.

    ``ridge`` > 0 adds ridge * trace/c on the diagonal, for rank-deficient
    trials (e.g. fewer samples than channels). Without it a singular
    covariance raises NotSpdError rather than being patched silently.
    """
    data = trial.data if isinstance(trial, Trial) else np.asarray(trial, dtype=float)
    if data.ndim != 2:
        raise ValueError("expected a (channels, samples) matrix")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    c, t = data.shape
    cov = data @ data.T / t
    cov = (cov + cov.T) / 2.0
    if ridge > 0.0:
        cov = cov + ridge * (np.trace(cov) / c) * np.eye(c)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NotSpdError(
            "trial covariance is rank deficient; pass ridge > 0 to regularise"
        ) from None
    return cov


def euclidean_reference(trials, ridge: float = 0.0) -> ReferenceMatrix:
    """Arithmetic mean of trial covariances and its whitener."""
    covs = [trial_covariance(tr, ridge) for tr in trials]
    mean = arithmetic_mean(covs)
    return ReferenceMatrix(kind="euclidean", matrix=mean, whitener=invsqrtm(mean))


def riemannian_reference(
    trials, ridge: float = 0.0, tol: float = 1e-9, max_iter: int = 50
) -> ReferenceMatrix:
    """Geometric (Karcher) mean of trial covariances and its whitener."""
    covs = [trial_covariance(tr, ridge) for tr in trials]
    mean = karcher_mean(covs, tol=tol, max_iter=max_iter)
    return ReferenceMatrix(kind="riemannian", matrix=mean, whitener=invsqrtm(mean))


def make_reference(trials, kind: str, ridge: float = 0.0) -> ReferenceMatrix:
    if kind == "euclidean":
        return euclidean_reference(trials, ridge)
    if kind == "riemannian":
        return riemannian_reference(trials, ridge)
    raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")


def apply_reference(ref: ReferenceMatrix, trial: Trial) -> Trial:
    """Whiten one trial: data becomes W @ data, label unchanged."""
    if ref.whitener.shape[0] != trial.n_channels:
        raise ValueError(
            f"reference has {ref.whitener.shape[0]} channels, trial has {trial.n_channels}"
        )
    return Trial(data=ref.whitener @ trial.data, label=trial.label)


def align_offline(ts: TrialSet, policy: AlignmentPolicy, ridge: float = 0.0) -> TrialSet:
    """Recenter consecutive groups of ``policy.group_size`` trials in place.

    Every group is whitened with a reference estimated from that group
    alone. The trial count must be an exact multiple of the group size
    (see trim_to_multiple). group_size == n_trials degenerates to plain
    whole-set alignment.
    """
    g = policy.group_size
    if ts.n_trials == 0 or ts.n_trials % g != 0:
        raise ValueError(
            f"{ts.n_trials} trials is not a positive multiple of group_size={g}"
        )
    out = []
    for start in range(0, ts.n_trials, g):
        group = ts.trials[start : start + g]
        ref = make_reference(group, policy.kind, ridge)
        out.extend(apply_reference(ref, tr) for tr in group)
    return ts.with_trials(out)


def align_pseudo_online(
    ts: TrialSet, policy: AlignmentPolicy, ridge: float = 0.0
) -> tuple[TrialSet, TrialSet]:
    """Causal alignment: one reference from the first group, applied to all.

    Returns (calibration, rest): the first ``group_size`` trials, whitened
    with their own reference, and every later trial whitened with that
    same reference. The calibration run is consumed by the reference and
    must not be scored.
    """
    g = policy.group_size
    if ts.n_trials < 2 * g:
        raise ValueError(
            f"pseudo-online alignment needs >= {2 * g} trials, set has {ts.n_trials}"
        )
    calib_trials = ts.trials[:g]
    ref = make_reference(calib_trials, policy.kind, ridge)
    calib = ts.with_trials(apply_reference(ref, tr) for tr in calib_trials)
    rest = ts.with_trials(apply_reference(ref, tr) for tr in ts.trials[g:])
    return calib, rest
