"""Paired statistics over per-subject accuracies.

A one-tailed sign-flip permutation test on paired differences (exhaustive
for small samples, seeded Monte-Carlo otherwise), the paired standardized
mean difference, Pearson correlation, and an all-pairs significance matrix
over pipelines evaluated on the same subjects.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

__all__ = [
    "ZeroVarianceError",
    "permutation_paired_ttest",
    "standardized_mean_difference",
    "pearson_corr",
    "SignificanceMatrix",
    "significance_matrix",
]

# Up to this sample size all 2^n sign patterns are enumerated; beyond it
# the test switches to seeded Monte-Carlo sampling.
EXHAUSTIVE_LIMIT = 14
# Slack when comparing permuted statistics against the observed one, so
# the identity permutation always counts despite summation-order noise.
_TIE_EPS = 1e-12


class ZeroVarianceError(ValueError):
    """A statistic that divides by a variance received constant input."""


def _paired(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"paired samples differ in length: {a.shape} vs {b.shape}")
    if len(a) < 2:
        raise ValueError("need at least two pairs")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("samples contain non-finite values")
    return a, b


def permutation_paired_ttest(a, b, n_perm: int = 10000, rng_seed: int = 0) -> float:
    """One-tailed p-value for "a exceeds b" under paired sign flipping.

    The statistic is mean(a - b). Under the null of no difference each
    pair's sign is exchangeable; p is the fraction of sign assignments
    whose statistic is at least the observed one.

    With n <= 14 pairs all 2^n assignments are enumerated, so p is exact
    and at least 2^-n. Larger samples use ``n_perm`` seeded draws that
    always include the identity assignment, so p >= 1/n_perm and results
    are reproducible for a given seed.
    """
    a, b = _paired(a, b)
    d = a - b
    n = len(d)
    observed = d.mean()
    slack = _TIE_EPS * max(1.0, abs(observed))
    if n <= EXHAUSTIVE_LIMIT:
        signs = np.array(list(product((1.0, -1.0), repeat=n)))
        stats = signs @ d / n
        return float(np.mean(stats >= observed - slack))
    if n_perm < 1:
        raise ValueError("n_perm must be >= 1")
    rng = np.random.default_rng(rng_seed)
    signs = rng.choice((1.0, -1.0), size=(n_perm - 1, n))
    stats = signs @ d / n
    hits = 1 + int(np.sum(stats >= observed - slack))  # identity counts
    return hits / n_perm


def standardized_mean_difference(a, b) -> float:
    """Paired Cohen's d: mean(a - b) / std(a - b), Bessel-corrected."""
    a, b = _paired(a, b)
    d = a - b
    sd = d.std(ddof=1)
    if sd <= 0.0:
        raise ZeroVarianceError("paired differences are constant; SMD undefined")
    return float(d.mean() / sd)


def pearson_corr(x, y) -> float:
    """Pearson correlation coefficient; rejects constant input."""
    x, y = _paired(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
    if denom <= 0.0:
        raise ZeroVarianceError("correlation undefined for constant input")
    return float(np.dot(dx, dy) / denom)


@dataclass(frozen=True)
class SignificanceMatrix:
    """All-pairs one-tailed p-values and effect sizes over pipelines.

    p[i, j] is the p-value that pipeline i outperforms pipeline j;
    smd[i, j] the corresponding paired standardized mean difference
    (0 by convention when the differences have no variance, which
    includes the diagonal).
    """

    pipelines: tuple[str, ...]
    subjects: tuple[int, ...]
    p: np.ndarray
    smd: np.ndarray

    def to_dict(self) -> dict:
        return {
            "pipelines": list(self.pipelines),
            "subjects": list(self.subjects),
            "p": self.p.tolist(),
            "smd": self.smd.tolist(),
        }


def significance_matrix(
    pipelines: dict[str, dict[int, float]],
    n_perm: int = 10000,
    rng_seed: int = 0,
) -> SignificanceMatrix:
    """Pairwise permutation tests between pipelines on shared subjects.

    ``pipelines`` maps pipeline name to a subject -> accuracy mapping; all
    pipelines must cover the identical subject set. Order of names is
    preserved.
    """
    names = tuple(pipelines.keys())
    if len(names) < 1:
        raise ValueError("need at least one pipeline")
    subject_sets = [frozenset(accs.keys()) for accs in pipelines.values()]
    if len(set(subject_sets)) != 1:
        raise ValueError("pipelines cover different subject sets")
    subjects = tuple(sorted(subject_sets[0]))
    vectors = {
        name: np.array([pipelines[name][s] for s in subjects]) for name in names
    }
    k = len(names)
    p = np.ones((k, k))
    smd = np.zeros((k, k))
    for i, ni in enumerate(names):
        for j, nj in enumerate(names):
            p[i, j] = permutation_paired_ttest(
                vectors[ni], vectors[nj], n_perm=n_perm, rng_seed=rng_seed
            )
            try:
                smd[i, j] = standardized_mean_difference(vectors[ni], vectors[nj])
            except ZeroVarianceError:
                smd[i, j] = 0.0
    return SignificanceMatrix(pipelines=names, subjects=subjects, p=p, smd=smd)
