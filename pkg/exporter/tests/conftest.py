"""Builders for synthetic source files in the two hosting formats.

Tests pre-seed the download cache with these, so no test touches the
network. Signal values encode (channel, sample) pairs where a test needs
to prove windowing or channel selection; keep the encoded range under
2^24 so the float32 round trip stays exact.
"""

import h5py
import numpy as np
from scipy.io import savemat

from eegb_export import bnci

CUE_CYCLE = (1, 2, 3, 4)  # left, right, foot, tongue


def encode(column: int, sample: int) -> float:
    return float(column * 20000 + sample)


def bnci_run(n_trials: int, fs: float, *, spacing_s: float = 6.5, encoded: bool = True,
             rng: np.random.Generator | None = None, n_columns: int = 25):
    """One run dict in the source layout; cues cycle left/right/foot/tongue."""
    spacing = int(round(spacing_s * fs))
    starts = 1 + np.arange(n_trials) * spacing  # 1-based
    rows = int(starts[-1] - 1 + 6.0 * fs + 25)
    if encoded:
        x = np.fromfunction(lambda s, c: c * 20000 + s, (rows, n_columns))
    else:
        x = rng.standard_normal((rows, n_columns))
    cues = np.array([CUE_CYCLE[i % 4] for i in range(n_trials)])
    return {
        "X": x.astype(np.float32),
        "trial": starts.astype(float),
        "y": cues.astype(float),
        "fs": float(fs),
        "classes": np.array(["left hand", "right hand", "foot", "tongue"], dtype=object),
        "artifacts": np.zeros(n_trials),
    }


def write_bnci_cache(cache_dir, subjects=bnci.SUBJECTS, *, n_trials=8, fs=50.0,
                     runs_per_session=1, encoded=True, seed=0):
    """A{ss}T.mat / A{ss}E.mat for every subject, plus a trial-less opening run."""
    rng = np.random.default_rng(seed)
    cache_dir.mkdir(parents=True, exist_ok=True)
    for subject in subjects:
        for session in bnci.SESSIONS:
            baseline = {
                "X": np.zeros((40, 25), dtype=np.float32),
                "trial": np.array([]),
                "y": np.array([]),
                "fs": float(fs),
            }
            runs = [baseline] + [
                bnci_run(n_trials, fs, encoded=encoded, rng=rng)
                for _ in range(runs_per_session)
            ]
            savemat(
                cache_dir / f"A{subject:02d}{session}.mat",
                {"data": np.array(runs, dtype=object)},
            )


def write_hgd_file(path, channel_names, onsets_ms, codes, fs=50.0, *, rng=None):
    """One BBCI-style v7.3 container; channel data encodes its column index."""
    n_rows = int(round(max(onsets_ms) / 1000.0 * fs + 4.0 * fs + 25))
    with h5py.File(path, "w") as f:
        for i, _ in enumerate(channel_names):
            if rng is None:
                sig = np.fromiter((encode(i, s) for s in range(n_rows)), dtype=np.float32)
            else:
                sig = rng.standard_normal(n_rows).astype(np.float32)
            f.create_dataset(f"ch{i + 1}", data=sig.reshape(-1, 1))
        refs = []
        for j, name in enumerate(channel_names):
            chars = np.array([[ord(c)] for c in name], dtype=np.uint16)
            refs.append(f.create_dataset(f"#refs#/n{j}", data=chars).ref)
        f.create_dataset("nfo/clab", data=np.array(refs, dtype=h5py.ref_dtype).reshape(1, -1))
        f.create_dataset("nfo/fs", data=np.array([[fs]]))
        f.create_dataset("mrk/time", data=np.asarray(onsets_ms, dtype=float).reshape(1, -1))
        f.create_dataset("mrk/event/desc", data=np.asarray(codes, dtype=float).reshape(1, -1))


def write_hgd_cache(cache_dir, subjects, channel_names, *, n_trials=8, fs=50.0, seed=0):
    rng = np.random.default_rng(seed)
    cache_dir.mkdir(parents=True, exist_ok=True)
    onsets = [1000.0 + i * 5000.0 for i in range(n_trials)]
    codes = [CUE_CYCLE[i % 4] for i in range(n_trials)]
    for subject in subjects:
        for session in ("train", "test"):
            write_hgd_file(
                cache_dir / f"{session}_{subject}.mat",
                channel_names, onsets, codes, fs=fs, rng=rng,
            )
