"""Bounded thread pool for independent operator applications.

``PSIFRAC_THREADS`` caps the worker count.  Every task writes its own result
slot, so output never depends on the schedule.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence


def thread_count() -> int:
    raw = os.environ.get("PSIFRAC_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def pmap(fns: Sequence[Callable[[], object]]) -> list:
    """Run zero-argument callables and return their results in order."""
    n = min(thread_count(), len(fns))
    if n <= 1:
        return [f() for f in fns]
    with ThreadPoolExecutor(max_workers=n) as pool:
        futures = [pool.submit(f) for f in fns]
        return [fut.result() for fut in futures]
