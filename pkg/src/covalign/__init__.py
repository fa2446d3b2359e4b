"""Covariance alignment for cross-subject EEG decoding.

Euclidean (arithmetic-mean whitening) and Riemannian (geometric-mean
recentering) trial alignment, a compact convolutional classifier with
hand-written gradients, leave-one-subject-out evaluation pipelines and
paired permutation statistics.
"""

__version__ = "0.1.0"

from .trialdata import Dataset, Trial, TrialSet  # noqa: F401
