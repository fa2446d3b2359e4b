"""BNCI2014-001 (BCI Competition IV dataset 2a), via its .mat hosting.

Nine subjects, two sessions each (training day ``T``, evaluation day
``E``), hosted as one MATLAB file per subject-session. Each file holds a
cell array of runs; a run has the continuous signal ``X`` (samples x 25
columns: the 22-electrode montage plus three EOG channels), 1-based
``trial`` start indices, cue labels ``y`` in 1..4, and the sampling rate.
Only the left/right-hand classes (1, 2) are exported, as 0/1, from the
2-6 s post-cue window of each trial. Opening runs without trials (eyes
open/closed baselines) are skipped.
"""

import numpy as np
from scipy.io import loadmat

from .fetch import fetch

BASE_URL = "https://bnci-horizon-2020.eu/database/data-sets/001-2014/"
SUBJECTS = tuple(range(1, 10))
SESSIONS = ("T", "E")
SESSION_NAMES = {"T": "train", "E": "eval"}
TRIAL_WINDOW_S = (2.0, 6.0)

# column order of the EEG electrodes in X; columns 22-24 are EOG
MONTAGE = (
    "Fz", "FC3", "FC1", "FCz", "FC2", "FC4", "C5", "C3", "C1", "Cz", "C2",
    "C4", "C6", "CP3", "CP1", "CPz", "CP2", "CP4", "P1", "Pz", "P2", "POz",
)
LABEL_MAP = {1: 0, 2: 1}  # left_hand -> 0, right_hand -> 1


def columns_for(channels) -> list[int]:
    missing = [ch for ch in channels if ch not in MONTAGE]
    if missing:
        raise ValueError(f"channels not in the BNCI2014-001 montage: {missing}")
    return [MONTAGE.index(ch) for ch in channels]


def _runs(mat_path):
    data = loadmat(mat_path, simplify_cells=True)["data"]
    return data if isinstance(data, (list, np.ndarray)) else [data]


def epochs_from_file(mat_path, columns) -> tuple[np.ndarray, np.ndarray, float]:
    """All left/right epochs of one session file: (labels, trials, fs)."""
    segments, labels = [], []
    fs = None
    for run in _runs(mat_path):
        starts = np.atleast_1d(run["trial"]).astype(int)
        if starts.size == 0:
            continue
        x = np.asarray(run["X"], dtype=float)
        y = np.atleast_1d(run["y"]).astype(int)
        fs = float(run["fs"])
        lo = int(round(TRIAL_WINDOW_S[0] * fs))
        hi = int(round(TRIAL_WINDOW_S[1] * fs))
        for start, cue in zip(starts, y, strict=True):
            if cue not in LABEL_MAP:
                continue
            seg = x[start - 1 + lo : start - 1 + hi, columns]
            if len(seg) != hi - lo:
                raise ValueError(f"{mat_path}: trial at sample {start} runs past the signal")
            segments.append(seg.T)
            labels.append(LABEL_MAP[cue])
    if fs is None:
        raise ValueError(f"{mat_path}: no runs with trials")
    return np.array(labels), np.array(segments), fs


def sessions(subject: int, channels, cache_dir):
    """Yield (session_name, labels, trials, fs) for one subject."""
    columns = columns_for(channels)
    for session in SESSIONS:
        filename = f"A{subject:02d}{session}.mat"
        path = fetch(BASE_URL + filename, cache_dir, filename)
        labels, trials, fs = epochs_from_file(path, columns)
        yield SESSION_NAMES[session], labels, trials, fs
