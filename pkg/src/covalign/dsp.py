"""FIR filtering and rational resampling for trial preprocessing.

Band-pass filters are linear-phase windowed-sinc designs (Hamming window);
convolution runs block-wise in the frequency domain (overlap-add) and the
group delay is removed, so filtering preserves signal length and timing.
Resampling upsamples by the rational factor, low-passes at the tighter
Nyquist rate and decimates; with an FFT-based convolution this computes
exactly what a polyphase bank would.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .trialdata import Trial, TrialSet

__all__ = [
    "FilterSpec",
    "design_bandpass",
    "design_lowpass",
    "bandpass_overlap_add",
    "resample",
    "preprocess_trialset",
]


@dataclass(frozen=True)
class FilterSpec:
    """Band edges and length of a linear-phase FIR band-pass."""

    low_hz: float
    high_hz: float
    fs: float
    n_taps: int = 251

    def __post_init__(self):
        if self.fs <= 0:
            raise ValueError("fs must be positive")
        if not 0.0 < self.low_hz < self.high_hz < self.fs / 2.0:
            raise ValueError(
                f"need 0 < low < high < fs/2, got ({self.low_hz}, {self.high_hz}) at fs={self.fs}"
            )
        if self.n_taps < 3 or self.n_taps % 2 == 0:
            raise ValueError("n_taps must be odd and >= 3 (symmetric, integer group delay)")


def design_lowpass(cutoff_hz: float, fs: float, n_taps: int) -> np.ndarray:
    """Windowed-sinc low-pass, Hamming window, unit DC gain by construction."""
    if not 0.0 < cutoff_hz <= fs / 2.0:
        raise ValueError("cutoff must lie in (0, fs/2]")
    if n_taps < 3 or n_taps % 2 == 0:
        raise ValueError("n_taps must be odd and >= 3")
    mid = (n_taps - 1) // 2
    k = np.arange(n_taps) - mid
    f = cutoff_hz / fs
    taps = 2.0 * f * np.sinc(2.0 * f * k) * np.hamming(n_taps)
    # Scale to exactly unit DC gain; the window alone leaves ~1e-3 error.
    return taps / taps.sum()


def design_bandpass(spec: FilterSpec) -> np.ndarray:
    """Band-pass taps as the difference of two windowed-sinc low-passes.

    The result is exactly symmetric (linear phase) and has near-zero DC
    response, so slow drifts are rejected without demeaning.
    """
    # Difference of two unit-DC low-passes: DC response cancels exactly.
    hi = design_lowpass(spec.high_hz, spec.fs, spec.n_taps)
    lo = design_lowpass(spec.low_hz, spec.fs, spec.n_taps)
    return hi - lo


def _overlap_add_full(x: np.ndarray, taps: np.ndarray, block_size: int) -> np.ndarray:
    """Full linear convolution of x with taps, computed block-wise via FFT."""
    n, m = len(x), len(taps)
    nfft = 1
    while nfft < block_size + m - 1:
        nfft <<= 1
    spectrum = np.fft.rfft(taps, nfft)
    out = np.zeros(n + m - 1)
    for start in range(0, n, block_size):
        seg = x[start : start + block_size]
        conv = np.fft.irfft(np.fft.rfft(seg, nfft) * spectrum, nfft)[: len(seg) + m - 1]
        out[start : start + len(seg) + m - 1] += conv
    return out


def bandpass_overlap_add(x: np.ndarray, taps: np.ndarray, block_size: int = 4096) -> np.ndarray:
    """Filter a 1-D signal, same output length, group delay removed.

    Equal to direct linear convolution (centered slice) up to FFT rounding;
    block_size only affects speed, never values beyond ~1e-9 relative.
    """
    x = np.asarray(x, dtype=float)
    taps = np.asarray(taps, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a 1-D signal")
    if block_size < len(taps):
        raise ValueError(f"block_size {block_size} shorter than the filter ({len(taps)} taps)")
    if len(x) == 0:
        return x.copy()
    full = _overlap_add_full(x, taps, block_size)
    delay = (len(taps) - 1) // 2
    return full[delay : delay + len(x)]


def resample(x: np.ndarray, fs_in: float, fs_out: float) -> np.ndarray:
    """Rational-rate resampling with an anti-aliasing low-pass.

    The rate ratio must be expressible as a fraction with denominator
    <= 1000 (exact for the usual EEG rates). Output length is
    round(len(x) * fs_out / fs_in).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a 1-D signal")
    if fs_in <= 0 or fs_out <= 0:
        raise ValueError("sampling rates must be positive")
    if fs_in == fs_out:
        return x.copy()
    ratio = fs_out / fs_in
    frac = Fraction(ratio).limit_denominator(1000)
    if abs(float(frac) - ratio) > 1e-9 * ratio:
        raise ValueError(
            f"rate ratio {fs_out}/{fs_in} not expressible with denominator <= 1000"
        )
    up, down = frac.numerator, frac.denominator
    n = len(x)
    out_len = int(round(n * ratio))
    if n == 0:
        return np.zeros(0)

    stuffed = np.zeros(n * up)
    stuffed[::up] = x
    # Anti-aliasing low-pass at the tighter Nyquist rate, gain `up` to
    # restore the amplitude lost to zero stuffing.
    cutoff = 0.5 * min(fs_in, fs_out)
    n_taps = 2 * 16 * max(up, down) + 1
    taps = design_lowpass(cutoff, fs_in * up, n_taps) * up
    smoothed = bandpass_overlap_add(stuffed, taps, block_size=max(4096, n_taps))
    idx = np.arange(out_len) * down
    return smoothed[idx]


def preprocess_trialset(
    ts: TrialSet,
    spec: FilterSpec | None = None,
    resample_to: float | None = None,
    block_size: int = 4096,
) -> TrialSet:
    """Band-pass every channel of every trial, then resample.

    Either step may be skipped by passing None. Returns a new TrialSet;
    fs reflects the resampling target when one is given.
    """
    if spec is not None and spec.fs != ts.fs:
        raise ValueError(f"filter designed for fs={spec.fs}, set has fs={ts.fs}")
    taps = design_bandpass(spec) if spec is not None else None
    out_trials = []
    for tr in ts.trials:
        chans = []
        for ch in tr.data:
            y = bandpass_overlap_add(ch, taps, block_size) if taps is not None else ch
            if resample_to is not None:
                y = resample(y, ts.fs, resample_to)
            chans.append(y)
        out_trials.append(Trial(data=np.stack(chans), label=tr.label))
    new_fs = resample_to if resample_to is not None else ts.fs
    if not out_trials:
        new_samples = ts.samples
        if resample_to is not None:
            new_samples = int(round(ts.samples * resample_to / ts.fs))
        return TrialSet(
            subject_id=ts.subject_id, session_id=ts.session_id, fs=new_fs,
            trials=(), channels=ts.channels, samples=new_samples,
        )
    return TrialSet(
        subject_id=ts.subject_id,
        session_id=ts.session_id,
        fs=new_fs,
        trials=tuple(out_trials),
    )
