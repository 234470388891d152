"""
Ordered parallel map over independent work items (one item per tree).
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

logger = logging.getLogger(__name__)

THREADS_ENV_VAR = "TREESLICED_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def default_workers() -> int:
    """
    Get the default worker count.

    Reads ``TREESLICED_THREADS`` (populated from ``.env`` by the CLI) and
    falls back to a single worker.

    Returns:
        Number of worker threads, at least 1
    """
    raw = os.environ.get(THREADS_ENV_VAR)
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning(f"Ignoring non-integer {THREADS_ENV_VAR}={raw!r}")
        return 1


def ordered_map(func: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> List[R]:
    """
    Apply ``func`` to every item and return results in input order.

    numpy releases the GIL inside its kernels, so threads give real speedups
    for per-tree work. Result order never depends on the worker count, which
    keeps downstream reductions bit-reproducible.

    Args:
        func: Pure function of one item
        items: Work items
        workers: Thread count; None reads the environment default

    Returns:
        List of results aligned with ``items``
    """
    items = list(items)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) <= 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as executor:
        return list(executor.map(func, items))
