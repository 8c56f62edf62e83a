# app/core/workers.py
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Sequence, TypeVar

import numpy as np

from app.core.config import resolve_threads

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> List[R]:
    """Map over items with a thread pool; results keep input order"""
    items = list(items)
    workers = min(resolve_threads(threads), max(len(items), 1))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def chunked(values: np.ndarray, threads: int | None = None) -> Sequence[np.ndarray]:
    """Split a 1-d grid into contiguous chunks, one per worker"""
    workers = min(resolve_threads(threads), max(len(values), 1))
    return np.array_split(values, workers)

