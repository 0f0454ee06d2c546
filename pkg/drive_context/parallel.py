"""
Per-trajectory worker parallelism and seed derivation.

Results always come back in input order, so `--jobs` never changes output bytes.
"""

import hashlib
import multiprocessing
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def run_parallel(func: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> List[R]:
    """
    Map func over items with `jobs` worker processes.

    Args:
        func: Picklable callable (module-level function or functools.partial)
        items: Inputs
        jobs: 1 runs in-process

    Returns:
        Results in input order
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    processes = min(jobs, len(items))
    chunksize = max(1, len(items) // (processes * 4))
    with multiprocessing.Pool(processes=processes) as pool:
        return list(pool.imap(func, items, chunksize=chunksize))


def derive_seed(seed: int, key: str) -> int:
    """Stable 64-bit seed for one work item (independent of scheduling)."""
    digest = hashlib.sha256(f"{seed}:{key}".encode()).digest()
    return int.from_bytes(digest[:8], "little")
