"""Small shared helpers: bounded parallelism and config hashing."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["thread_count", "parallel_map", "config_hash"]


def thread_count() -> int:
    """Worker count from DTNLAB_THREADS (0 or unset = automatic)."""
    raw = os.environ.get("DTNLAB_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = min(4, os.cpu_count() or 1)
    return n


def parallel_map(fn, items):
    """Map preserving order; threads when more than one worker is allowed.

    Each task must own its state (factorizations etc.); results are
    merged deterministically by input order.
    """
    items = list(items)
    n = thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def config_hash(config: dict) -> str:
    """Stable short hash of a fully-resolved configuration."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
