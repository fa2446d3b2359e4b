"""Shared test utilities: random SPD matrices and small trial factories."""

from __future__ import annotations

import numpy as np

from covalign.trialdata import Trial, TrialSet


def rand_orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def rand_spd(rng: np.random.Generator, n: int, log_cond: float = 3.0) -> np.ndarray:
    """Random SPD matrix with eigenvalues log-uniform over ~e^log_cond range."""
    q = rand_orthogonal(rng, n)
    w = np.exp(rng.uniform(-log_cond / 2, log_cond / 2, size=n))
    return (q * w) @ q.T


def rand_trialset(
    rng: np.random.Generator,
    n_trials: int = 8,
    channels: int = 3,
    samples: int = 40,
    subject_id: int = 1,
    session_id: str = "s1",
    fs: float = 250.0,
) -> TrialSet:
    trials = []
    for i in range(n_trials):
        data = rng.standard_normal((channels, samples)).astype(np.float32).astype(float)
        trials.append(Trial(data=data, label=int(i % 2)))
    return TrialSet(
        subject_id=subject_id,
        session_id=session_id,
        fs=fs,
        trials=tuple(trials),
    )
