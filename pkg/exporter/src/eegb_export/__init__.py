"""Export public motor-imagery EEG datasets to the EEGB interchange format."""

from .config import DATASETS, ExportConfig, export

__all__ = ["DATASETS", "ExportConfig", "export"]
