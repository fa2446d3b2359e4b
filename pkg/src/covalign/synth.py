"""Synthetic cross-subject benchmark with controllable distribution shift.

Each subject observes latent sources through their own mixing matrix:
a trial is X = A S + noise, where the rows of S are white Gaussian with
class-dependent variances (class 0 boosts source 0, class 1 boosts
source 1). The expected trial covariance is therefore
A diag(v_class) A^T + sigma^2 I, and the inter-subject shift lives
entirely in A.

Mixing matrices are sampled as Q D with Q orthogonal and D log-uniform
diagonal; the shift knob scales both the rotation angle of Q and the
spread of D. Average source power is calibrated to 1 for every source,
which keeps the shift recoverable by covariance whitening up to the
residual rotation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trialdata import Dataset, Trial, TrialSet
from .util import stable_seed

__all__ = ["SyntheticSubjectSpec", "generate_subject", "make_benchmark", "SHIFT_LEVELS"]

# (rotation_strength, log_scale_spread) per difficulty knob. Calibrated so
# that at "strong" a subject-specific classifier stays in the 85-95%
# self-accuracy band while naive cross-subject transfer collapses.
SHIFT_LEVELS = {
    "none": (0.0, 0.0),
    "weak": (0.12, 0.4),
    "strong": (0.35, 1.6),
}

# Class separation / noise defaults, calibrated together with SHIFT_LEVELS.
CLASS_GAP = 0.55
NOISE_STD = 0.8


@dataclass(frozen=True)
class SyntheticSubjectSpec:
    """Everything needed to reproduce one synthetic subject."""

    subject_id: int
    mixing: np.ndarray
    class_source_variances: np.ndarray  # (2, channels), all positive
    noise_std: float
    trials_per_class: int
    samples: int
    fs: float
    rng_seed: int

    def __post_init__(self):
        mixing = np.asarray(self.mixing, dtype=float)
        variances = np.asarray(self.class_source_variances, dtype=float)
        c = mixing.shape[0]
        if mixing.shape != (c, c):
            raise ValueError("mixing must be square")
        if np.linalg.cond(mixing) > 1e3:
            raise ValueError("mixing matrix is too ill-conditioned (cond > 1e3)")
        if variances.shape != (2, c):
            raise ValueError(f"class_source_variances must be (2, {c})")
        if np.any(variances <= 0):
            raise ValueError("source variances must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.trials_per_class < 1 or self.samples < 1:
            raise ValueError("trials_per_class and samples must be positive")
        object.__setattr__(self, "mixing", mixing)
        object.__setattr__(self, "class_source_variances", variances)


def generate_subject(spec: SyntheticSubjectSpec) -> TrialSet:
    """Draw one subject's session: alternating labels, X = A S + noise.

    Fully determined by spec.rng_seed; regenerating one subject never
    consumes another subject's random stream.
    """
    rng = np.random.default_rng(spec.rng_seed)
    c = spec.mixing.shape[0]
    scale = np.sqrt(spec.class_source_variances)  # (2, c)
    trials = []
    for i in range(2 * spec.trials_per_class):
        label = i % 2  # alternating: every acquisition run is class balanced
        sources = rng.standard_normal((c, spec.samples)) * scale[label][:, None]
        data = spec.mixing @ sources
        if spec.noise_std > 0:
            data = data + spec.noise_std * rng.standard_normal((c, spec.samples))
        trials.append(Trial(data=data, label=label))
    return TrialSet(
        subject_id=spec.subject_id,
        session_id="synthetic",
        fs=spec.fs,
        trials=tuple(trials),
    )


def expected_covariance(spec: SyntheticSubjectSpec, label: int) -> np.ndarray:
    """Population covariance A diag(v_label) A^T + sigma^2 I."""
    a = spec.mixing
    v = spec.class_source_variances[label]
    return (a * v) @ a.T + spec.noise_std**2 * np.eye(a.shape[0])


def _mixing(rng: np.random.Generator, channels: int, rotation: float, spread: float) -> np.ndarray:
    """Q D with Q orthogonal (angle grows with ``rotation``) and D log-uniform."""
    if rotation == 0.0 and spread == 0.0:
        return np.eye(channels)
    g = rng.standard_normal((channels, channels)) / np.sqrt(channels)
    q, r = np.linalg.qr(np.eye(channels) + rotation * g)
    q = q * np.sign(np.diag(r))  # continuous in `rotation`, Q -> I as it vanishes
    d = np.exp(rng.uniform(-spread / 2.0, spread / 2.0, size=channels))
    return q * d


def make_benchmark(
    n_subjects: int,
    *,
    channels: int = 4,
    samples: int = 128,
    trials_per_class: int = 24,
    shift: str = "strong",
    class_gap: float = CLASS_GAP,
    noise_std: float = NOISE_STD,
    fs: float = 250.0,
    seed: int = 0,
) -> Dataset:
    """Benchmark dataset of ``n_subjects`` sharing class structure, not mixing.

    The class variance profile boosts source 0 for class 0 and source 1
    for class 1, symmetrically (1 +- class_gap), so average source power
    is 1 and whitening can align subjects. ``shift`` picks the mixing
    dispersion: none / weak / strong.
    """
    if shift not in SHIFT_LEVELS:
        raise ValueError(f"shift must be one of {sorted(SHIFT_LEVELS)}, got {shift!r}")
    if channels < 2:
        raise ValueError("need at least 2 channels for two class-coding sources")
    if not 0.0 < class_gap < 1.0:
        raise ValueError("class_gap must be in (0, 1)")
    rotation, spread = SHIFT_LEVELS[shift]
    variances = np.ones((2, channels))
    variances[0, 0] = 1.0 + class_gap
    variances[0, 1] = 1.0 - class_gap
    variances[1, 0] = 1.0 - class_gap
    variances[1, 1] = 1.0 + class_gap
    subjects = []
    for k in range(1, n_subjects + 1):
        mix_rng = np.random.default_rng(stable_seed(seed, "mixing", k))
        spec = SyntheticSubjectSpec(
            subject_id=k,
            mixing=_mixing(mix_rng, channels, rotation, spread),
            class_source_variances=variances,
            noise_std=noise_std,
            trials_per_class=trials_per_class,
            samples=samples,
            fs=fs,
            rng_seed=stable_seed(seed, "subject", k),
        )
        subjects.append(generate_subject(spec))
    return Dataset(name=f"synth-{shift}", subjects=tuple(subjects))
