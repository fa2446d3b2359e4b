"""Small shared helpers: stable seeding, config hashing, bounded parallelism."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, Sequence

THREADS_ENV = "COVALIGN_THREADS"


def stable_seed(*parts: Any) -> int:
    """Derive a 63-bit seed from the given parts, stable across runs and machines.

    Unlike the builtin ``hash``, the result does not depend on interpreter
    hash randomisation, so seeded work scheduled from these values is
    reproducible run to run.
    """
    key = "\x1f".join(repr(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def config_hash(obj: Any) -> str:
    """Hex digest of a JSON-serialisable configuration, key order independent."""
    canonical = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def worker_count() -> int:
    """Worker cap for fold-level parallelism, controlled by COVALIGN_THREADS."""
    raw = os.environ.get(THREADS_ENV, "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def ordered_map(fn: Callable, items: Sequence) -> list:
    """Apply ``fn`` to items, preserving input order in the result.

    Runs on a thread pool when COVALIGN_THREADS > 1. Each item must carry its
    own RNG state; results are collected by position, never by completion
    order, so the output is identical to the sequential run.
    """
    n_workers = worker_count()
    if n_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, items))
