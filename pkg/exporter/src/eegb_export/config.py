"""Export configuration and the one public operation."""

from dataclasses import dataclass, field
from pathlib import Path

from . import bnci, hgd
from .eegb import write_eegb, write_manifest

DATASETS = {"BNCI2014-001": bnci, "Schirrmeister2017": hgd}

# the 22-electrode motor-cortex montage shared by both exports
DEFAULT_CHANNELS = bnci.MONTAGE
CLASSES = ("left_hand", "right_hand")


@dataclass(frozen=True)
class ExportConfig:
    dataset: str
    out_dir: Path
    cache_dir: Path
    channels: tuple[str, ...] = DEFAULT_CHANNELS
    subjects: tuple[int, ...] = field(default=())  # empty = all

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ValueError(
                f"unknown dataset {self.dataset!r}; expected one of {sorted(DATASETS)}"
            )
        if not self.channels:
            raise ValueError("channel list is empty")
        known = DATASETS[self.dataset].SUBJECTS
        bad = [s for s in self.subjects if s not in known]
        if bad:
            raise ValueError(f"unknown subjects {bad}; {self.dataset} has {known}")


def export(config: ExportConfig) -> Path:
    """Export every requested subject-session as EEGB; returns the manifest path.

    Signals are written at the source sampling rate — filtering and
    resampling are the downstream toolchain's job, so preprocessing stays
    single-sourced.
    """
    module = DATASETS[config.dataset]
    subjects = config.subjects or module.SUBJECTS
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for subject in subjects:
        for session, labels, trials, fs in module.sessions(
            subject, config.channels, config.cache_dir
        ):
            entry = write_eegb(
                out_dir / f"subject{subject:03d}_{session}.eegb",
                subject_id=subject,
                session_id=session,
                fs=fs,
                labels=labels,
                data=trials,
            )
            entries.append(entry)
    return write_manifest(out_dir, config.dataset, entries)
