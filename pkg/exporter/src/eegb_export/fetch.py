"""Cached downloads. Files land in the cache dir under their final name;
a present file is trusted, so pre-seeding the cache skips the network
entirely (useful offline and in tests).
"""

import urllib.error
import urllib.request
from pathlib import Path


class DownloadError(RuntimeError):
    pass


def fetch(url: str, cache_dir, filename: str) -> Path:
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / filename
    if path.exists():
        return path
    tmp = path.with_suffix(path.suffix + ".part")
    try:
        with urllib.request.urlopen(url) as resp, open(tmp, "wb") as fh:
            while chunk := resp.read(1 << 20):
                fh.write(chunk)
    except (urllib.error.URLError, OSError) as exc:
        tmp.unlink(missing_ok=True)
        raise DownloadError(
            f"could not fetch {url}: {exc}; place the file at {path} to skip the download"
        ) from exc
    tmp.replace(path)
    return path
