"""Writer for the EEGB v1 interchange format and its JSON manifest.

The layout is the one documented by the covalign reader (little-endian:
magic ``EEGB``, u16 version, u32 n_trials, u16 channels, u32 samples,
f32 fs, u32 subject_id, u16 session-id length, then the UTF-8 session id,
one u8 label per trial, and the f32 sample cube, trial-major and
channel-major within a trial). Implemented here independently so this
package hands data across a format boundary rather than a code one.
"""

import json
import struct
from pathlib import Path

import numpy as np

EEGB_MAGIC = b"EEGB"
EEGB_VERSION = 1
_HEADER = struct.Struct("<4sHIHIfIH")


def write_eegb(path, *, subject_id: int, session_id: str, fs: float, labels, data) -> dict:
    """Write one subject-session; returns its manifest entry.

    ``data`` is (n_trials, channels, samples); ``labels`` holds 0/1.
    """
    data = np.asarray(data, dtype=np.float32)
    labels = np.asarray(labels)
    if data.ndim != 3:
        raise ValueError(f"expected (trials, channels, samples), got {data.shape}")
    if len(labels) != len(data):
        raise ValueError(f"{len(labels)} labels for {len(data)} trials")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if not np.all(np.isfinite(data)):
        raise ValueError("non-finite samples")
    n_trials, channels, samples = data.shape
    session = session_id.encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(EEGB_MAGIC, EEGB_VERSION, n_trials, channels,
                              samples, float(fs), subject_id, len(session)))
        fh.write(session)
        fh.write(labels.astype(np.uint8).tobytes())
        fh.write(data.tobytes())
    return {
        "path": path.name,
        "subject_id": subject_id,
        "session_id": session_id,
        "n_trials": n_trials,
        "channels": channels,
        "samples": samples,
        "fs": float(fs),
    }


def write_manifest(out_dir, name: str, entries: list[dict]) -> Path:
    manifest_path = Path(out_dir) / "manifest.json"
    manifest_path.write_text(json.dumps({"name": name, "files": entries}, indent=2) + "\n")
    return manifest_path
