"""Command line entry point.

    eegb-export --dataset BNCI2014-001 --out data/bnci --cache-dir ~/.cache/eegb

Downloads land in --cache-dir and are reused on the next run; pre-seeding
the cache (from another machine, say) avoids the network entirely. Exit
codes: 0 ok, 1 unexpected error, 2 usage, 3 download failure, 4 bad
source data.
"""

import argparse
import sys

from .config import DATASETS, ExportConfig, export
from .fetch import DownloadError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eegb-export", description="export public EEG datasets as EEGB"
    )
    parser.add_argument("--dataset", required=True, choices=sorted(DATASETS))
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--cache-dir", required=True, help="download cache directory")
    parser.add_argument(
        "--subjects", type=int, nargs="+", default=(),
        help="subject numbers to export (default: all)",
    )
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = ExportConfig(
            dataset=args.dataset,
            out_dir=args.out,
            cache_dir=args.cache_dir,
            subjects=tuple(args.subjects),
        )
        manifest = export(config)
    except DownloadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # pragma: no cover - last resort
        print(f"unexpected error: {exc}", file=sys.stderr)
        return 1
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
