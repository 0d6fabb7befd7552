"""Thread-pool batch execution with results in input order.

Workers must be independent per item (own random state, distinct output
paths); the runner only caps parallelism and preserves ordering, so a run's
results never depend on the thread count.
"""

from __future__ import annotations

import os
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

from .errors import InputValidationError

ItemT = TypeVar("ItemT")
ResultT = TypeVar("ResultT")


def default_thread_count() -> int:
    return os.cpu_count() or 1


def run_batch(
    items: Sequence[ItemT],
    worker: Callable[[ItemT], ResultT],
    threads: int | None = None,
) -> list[ResultT]:
    """Apply `worker` to every item, returning results in item order."""
    if threads is None:
        threads = default_thread_count()
    if threads < 1:
        raise InputValidationError(f"threads must be >= 1, got {threads}")
    items = list(items)
    if threads == 1 or len(items) <= 1:
        return [worker(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, items))
