"""Schirrmeister2017 high-gamma dataset, via its BBCI .mat hosting.

Fourteen subjects, hosted as MATLAB v7.3 (HDF5) files ``train/<i>.mat``
and ``test/<i>.mat``. The BBCI container stores one dataset per channel
(``ch1``..``chN``), channel names as ``nfo/clab`` object references to
uint16 character arrays, the rate under ``nfo/fs``, and cue markers under
``mrk`` (onset times in milliseconds, class codes in ``event/desc`` with
1 = right hand, 2 = left hand, 3 = rest, 4 = feet). The motor-imagery
window is the 4 s from cue onset. Channels are selected by name so the
export matches the 22-electrode montage of the BNCI dataset; only the
left/right-hand classes are kept, as 0/1.
"""

import h5py
import numpy as np

from .fetch import fetch

BASE_URL = "https://web.gin.g-node.org/robintibor/high-gamma-dataset/raw/master/data/"
SUBJECTS = tuple(range(1, 15))
SESSIONS = ("train", "test")
TRIAL_LEN_S = 4.0
LABEL_MAP = {2: 0, 1: 1}  # left_hand -> 0, right_hand -> 1


def _channel_names(f: h5py.File) -> list[str]:
    refs = np.asarray(f["nfo/clab"]).ravel()
    return ["".join(chr(c) for c in np.asarray(f[ref]).ravel()) for ref in refs]


def epochs_from_file(mat_path, channels) -> tuple[np.ndarray, np.ndarray, float]:
    """All left/right epochs of one session file: (labels, trials, fs)."""
    with h5py.File(mat_path, "r") as f:
        names = _channel_names(f)
        missing = [ch for ch in channels if ch not in names]
        if missing:
            raise ValueError(f"{mat_path}: channels not in the recording montage: {missing}")
        fs = float(np.asarray(f["nfo/fs"]).ravel()[0])
        signal = np.stack(
            [np.asarray(f[f"ch{names.index(ch) + 1}"]).ravel() for ch in channels]
        )
        onsets_ms = np.asarray(f["mrk/time"]).ravel()
        codes = np.asarray(f["mrk/event/desc"]).ravel().astype(int)

    length = int(round(TRIAL_LEN_S * fs))
    segments, labels = [], []
    for onset_ms, code in zip(onsets_ms, codes, strict=True):
        if code not in LABEL_MAP:
            continue
        start = int(round(onset_ms / 1000.0 * fs))
        seg = signal[:, start : start + length]
        if seg.shape[1] != length:
            raise ValueError(f"{mat_path}: trial at {onset_ms} ms runs past the signal")
        segments.append(seg)
        labels.append(LABEL_MAP[code])
    if not segments:
        raise ValueError(f"{mat_path}: no left/right trials found")
    return np.array(labels), np.array(segments), fs


def sessions(subject: int, channels, cache_dir):
    """Yield (session_name, labels, trials, fs) for one subject."""
    for session in SESSIONS:
        path = fetch(
            f"{BASE_URL}{session}/{subject}.mat", cache_dir, f"{session}_{subject}.mat"
        )
        labels, trials, fs = epochs_from_file(path, channels)
        yield session, labels, trials, fs
