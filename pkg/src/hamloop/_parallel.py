"""Optional thread parallelism with a fixed reduction order."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def thread_count() -> int:
    raw = os.environ.get("HAMLOOP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def chunked_apply(fn, arr: np.ndarray, chunk: int = 65536) -> np.ndarray:
    """Apply `fn` to slices of `arr` along axis 0 and concatenate in order."""
    if arr.shape[0] <= chunk:
        return fn(arr)
    pieces = [arr[i : i + chunk] for i in range(0, arr.shape[0], chunk)]
    workers = thread_count()
    if workers == 1:
        results = [fn(p) for p in pieces]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, pieces))
    return np.concatenate(results)
