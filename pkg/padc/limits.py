"""Shared worker-parallelism limit."""
from __future__ import annotations

import os

DEFAULT_MAX_THREADS = os.cpu_count() or 1


def max_threads() -> int:
    try:
        value = int(os.getenv("PADC_THREADS", str(DEFAULT_MAX_THREADS)))
    except ValueError:
        value = DEFAULT_MAX_THREADS
    return max(1, value)


def effective_parallelism(requested: int) -> int:
    """Clamp a requested worker count to ``PADC_THREADS``."""
    return max(1, min(requested, max_threads()))
