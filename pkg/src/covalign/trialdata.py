"""Trial data model and the EEGB interchange format.

A Trial is one epoch of multichannel signal with a binary class label.
TrialSets group the trials of one recording session; Datasets group the
sessions of a study. Sets are serialised to EEGB, a little-endian binary
container (magic ``EEGB``), and a JSON manifest lists the files belonging
to a dataset so that exporters written in other languages can hand data
to this package.

EEGB v1 layout, all fields little-endian:

    magic       4 bytes  b"EEGB"
    version     u16      1
    n_trials    u32
    channels    u16
    samples     u32      per trial and channel
    fs          f32      sampling rate, Hz
    subject_id  u32
    sess_len    u16      length of the UTF-8 session id
    session_id  bytes
    labels      n_trials x u8
    data        n_trials * channels * samples f32, trial-major,
                channel-major within a trial

Sample values are stored as f32 (EEG dynamic range fits comfortably);
in memory everything is float64, so round trips are bit exact whenever
the values are f32-representable.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

EEGB_MAGIC = b"EEGB"
EEGB_VERSION = 1
_HEADER = struct.Struct("<4sHIHIfIH")

__all__ = [
    "FormatError",
    "Trial",
    "TrialSet",
    "Dataset",
    "write_eegb",
    "read_eegb",
    "write_dataset",
    "load_dataset",
    "trim_indices",
    "trim_to_multiple",
    "split_train_val",
]


class FormatError(ValueError):
    """Raised when an EEGB payload or manifest fails validation."""


@dataclass(frozen=True)
class Trial:
    """One epoch: a (channels, samples) float64 matrix plus a binary label."""

    data: np.ndarray
    label: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"trial data must be (channels, samples), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("trial data contains non-finite samples")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "label", int(self.label))

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class TrialSet:
    """All trials of one subject-session, in acquisition order.

    ``channels`` / ``samples`` may be given explicitly for empty sets
    (an empty set still has a well-defined shape on disk); for non-empty
    sets they are derived and cross-checked.
    """

    subject_id: int
    session_id: str
    fs: float
    trials: tuple[Trial, ...]
    channels: int | None = None
    samples: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "trials", tuple(self.trials))
        if self.fs <= 0:
            raise ValueError(f"sampling rate must be positive, got {self.fs}")
        if self.subject_id < 0:
            raise ValueError("subject_id must be non-negative")
        if self.trials:
            c, t = self.trials[0].data.shape
            for tr in self.trials:
                if tr.data.shape != (c, t):
                    raise ValueError("all trials in a set must share one shape")
            if self.channels not in (None, c) or self.samples not in (None, t):
                raise ValueError("explicit channels/samples disagree with trial data")
            object.__setattr__(self, "channels", c)
            object.__setattr__(self, "samples", t)
        else:
            if self.channels is None or self.samples is None:
                raise ValueError("empty TrialSet needs explicit channels and samples")

    @property
    def n_trials(self) -> int:
        return len(self.trials)

    def labels(self) -> np.ndarray:
        return np.array([tr.label for tr in self.trials], dtype=int)

    def data_array(self) -> np.ndarray:
        """Stacked (n_trials, channels, samples) float64 view of the set."""
        if not self.trials:
            return np.zeros((0, self.channels, self.samples))
        return np.stack([tr.data for tr in self.trials])

    def with_trials(self, trials) -> "TrialSet":
        return replace(self, trials=tuple(trials))


@dataclass(frozen=True)
class Dataset:
    """A named collection of subjects with consistent geometry."""

    name: str
    subjects: tuple[TrialSet, ...]

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        if not self.subjects:
            raise ValueError("dataset needs at least one subject")
        ids = [s.subject_id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate subject ids: {sorted(ids)}")
        first = self.subjects[0]
        for s in self.subjects:
            if (s.channels, s.samples, s.fs) != (first.channels, first.samples, first.fs):
                raise ValueError(
                    "subjects disagree on (channels, samples, fs): "
                    f"{(s.channels, s.samples, s.fs)} vs {(first.channels, first.samples, first.fs)}"
                )

    @property
    def subject_ids(self) -> tuple[int, ...]:
        return tuple(s.subject_id for s in self.subjects)

    def subject(self, subject_id: int) -> TrialSet:
        for s in self.subjects:
            if s.subject_id == subject_id:
                return s
        raise KeyError(f"no subject {subject_id} in dataset {self.name!r}")


def write_eegb(ts: TrialSet, path) -> None:
    """Serialise a TrialSet to an EEGB v1 file. Sample data is cast to f32."""
    path = Path(path)
    session = ts.session_id.encode("utf-8")
    if len(session) > 0xFFFF:
        raise ValueError("session id too long")
    header = _HEADER.pack(
        EEGB_MAGIC,
        EEGB_VERSION,
        ts.n_trials,
        ts.channels,
        ts.samples,
        float(ts.fs),
        ts.subject_id,
        len(session),
    )
    labels = np.array([tr.label for tr in ts.trials], dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(session)
        fh.write(labels.tobytes())
        for tr in ts.trials:
            fh.write(np.ascontiguousarray(tr.data, dtype="<f4").tobytes())


def read_eegb(path) -> TrialSet:
    """Read an EEGB v1 file back into a TrialSet (data as float64).

    Raises FormatError on a bad magic, unsupported version, truncated
    payload or non-finite samples.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n_trials, channels, samples, fs, subject_id, sess_len = _HEADER.unpack_from(raw)
    if magic != EEGB_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != EEGB_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    off = _HEADER.size
    if len(raw) < off + sess_len + n_trials:
        raise FormatError(f"{path}: truncated payload")
    session_id = raw[off : off + sess_len].decode("utf-8")
    off += sess_len
    labels = np.frombuffer(raw, dtype=np.uint8, count=n_trials, offset=off)
    off += n_trials
    expected = n_trials * channels * samples
    got = (len(raw) - off) // 4
    if got < expected or len(raw) - off != expected * 4:
        raise FormatError(
            f"{path}: expected {expected} f32 samples, file holds {got}"
        )
    flat = np.frombuffer(raw, dtype="<f4", count=expected, offset=off)
    if not np.all(np.isfinite(flat)):
        raise FormatError(f"{path}: non-finite samples")
    if np.any(labels > 1):
        raise FormatError(f"{path}: labels outside {{0,1}}")
    cube = flat.astype(float).reshape(n_trials, channels, samples)
    trials = tuple(Trial(data=cube[i], label=int(labels[i])) for i in range(n_trials))
    return TrialSet(
        subject_id=subject_id,
        session_id=session_id,
        fs=float(fs),
        trials=trials,
        channels=channels,
        samples=samples,
    )


def _manifest_entry(ts: TrialSet, rel_path: str) -> dict:
    return {
        "path": rel_path,
        "subject_id": ts.subject_id,
        "session_id": ts.session_id,
        "n_trials": ts.n_trials,
        "channels": ts.channels,
        "samples": ts.samples,
        "fs": ts.fs,
    }


def write_dataset(dataset: Dataset, out_dir, *, sets: list[TrialSet] | None = None) -> Path:
    """Write one EEGB file per session plus a manifest.json; returns its path.

    ``sets`` overrides the dataset's subject list when sessions are kept
    separate (several files per subject id are fine in a manifest; they
    are merged again on load).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for ts in sets if sets is not None else dataset.subjects:
        safe_sess = "".join(ch if ch.isalnum() else "-" for ch in ts.session_id) or "0"
        fname = f"subject{ts.subject_id:03d}_{safe_sess}.eegb"
        write_eegb(ts, out_dir / fname)
        entries.append(_manifest_entry(ts, fname))
    manifest = {"name": dataset.name, "files": entries}
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


def load_dataset(manifest_path, *, merge_sessions: bool = True) -> Dataset:
    """Load a dataset from a manifest.json written by this package or an exporter.

    With ``merge_sessions`` the trials of a subject's sessions are
    concatenated in manifest order into one TrialSet per subject.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: not valid JSON ({exc})") from None
    if "files" not in manifest or not isinstance(manifest["files"], list):
        raise FormatError(f"{manifest_path}: manifest lacks a 'files' list")
    base = manifest_path.parent
    sets: list[TrialSet] = []
    for entry in manifest["files"]:
        ts = read_eegb(base / entry["path"])
        declared = (entry.get("n_trials"), entry.get("channels"), entry.get("samples"))
        actual = (ts.n_trials, ts.channels, ts.samples)
        if any(d is not None and d != a for d, a in zip(declared, actual)):
            raise FormatError(f"{entry['path']}: manifest disagrees with file contents")
        sets.append(ts)
    if not merge_sessions:
        return Dataset(name=manifest.get("name", manifest_path.parent.name), subjects=tuple(sets))
    by_subject: dict[int, list[TrialSet]] = {}
    for ts in sets:
        by_subject.setdefault(ts.subject_id, []).append(ts)
    merged = []
    for sid, parts in by_subject.items():
        trials = tuple(tr for p in parts for tr in p.trials)
        merged.append(
            TrialSet(
                subject_id=sid,
                session_id="+".join(p.session_id for p in parts),
                fs=parts[0].fs,
                trials=trials,
                channels=parts[0].channels,
                samples=parts[0].samples,
            )
        )
    return Dataset(name=manifest.get("name", manifest_path.parent.name), subjects=tuple(merged))


def trim_indices(labels: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Indices that survive trimming ``len(labels)`` trials to a multiple of m.

    Removals are spread over the classes proportionally to their counts
    (within one trial); any odd removal comes out of the majority class.
    Surviving indices keep their original order.
    """
    labels = np.asarray(labels, dtype=int)
    n = len(labels)
    if m < 1:
        raise ValueError("m must be >= 1")
    if n < m:
        raise ValueError(f"cannot trim {n} trials to a multiple of {m}")
    r = n % m
    if r == 0:
        return np.arange(n)
    classes, counts = np.unique(labels, return_counts=True)
    removals = {int(c): int(r * cnt // n) for c, cnt in zip(classes, counts)}
    leftover = r - sum(removals.values())
    # Majority class absorbs the remainder; ties go to the lower label.
    order = sorted(zip(classes, counts), key=lambda pair: (-pair[1], pair[0]))
    for c, _ in order:
        if leftover == 0:
            break
        removals[int(c)] += 1
        leftover -= 1
    drop: list[int] = []
    for c in classes:
        k = removals[int(c)]
        if k == 0:
            continue
        members = np.flatnonzero(labels == c)
        if k > len(members):
            raise ValueError("trim would exhaust a class; need both classes present")
        drop.extend(rng.choice(members, size=k, replace=False).tolist())
    keep = np.setdiff1d(np.arange(n), np.array(drop, dtype=int))
    return keep


def trim_to_multiple(ts: TrialSet, m: int, rng_seed: int) -> TrialSet:
    """Drop trials so the count is a multiple of m, keeping class balance.

    Class proportions move by at most one trial per class; acquisition
    order of the survivors is preserved. Deterministic for a given seed.
    """
    rng = np.random.default_rng(rng_seed)
    keep = trim_indices(ts.labels(), m, rng)
    return ts.with_trials(ts.trials[i] for i in keep)


def split_train_val(pool, frac: float = 0.2, rng_seed: int = 0):
    """Split trials into disjoint (train, val) parts, |val| = round(frac * n).

    ``pool`` may be a TrialSet (returns two TrialSets) or any sequence
    (returns two lists). Elements keep their original relative order
    within each part.
    """
    if not 0.0 < frac < 1.0:
        raise ValueError(f"frac must be in (0, 1), got {frac}")
    items = list(pool.trials) if isinstance(pool, TrialSet) else list(pool)
    n = len(items)
    if n == 0:
        raise ValueError("cannot split an empty pool")
    n_val = int(round(frac * n))
    perm = np.random.default_rng(rng_seed).permutation(n)
    val_idx = np.sort(perm[:n_val])
    train_idx = np.sort(perm[n_val:])
    train = [items[i] for i in train_idx]
    val = [items[i] for i in val_idx]
    if isinstance(pool, TrialSet):
        return pool.with_trials(train), pool.with_trials(val)
    return train, val
