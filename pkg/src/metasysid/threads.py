"""Single-threaded BLAS for the training loops.

The batched gemms here are small enough that thread fan-out costs more than
it saves, and one-thread kernels keep per-call arithmetic order fixed.
"""

from __future__ import annotations

import threadpoolctl

_limiter = None


def limit_blas_threads(n: int = 1) -> None:
    """Pin BLAS pools to n threads; idempotent, first call wins."""
    global _limiter
    if _limiter is None:
        _limiter = threadpoolctl.threadpool_limits(limits=n, user_api="blas")
