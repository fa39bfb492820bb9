"""Counter-based random streams and an order-preserving parallel map.

Every Monte-Carlo draw in the package comes from ``stream(seed, *key)`` where
``key`` names the purpose and the chunk/replicate.  Outputs therefore depend on
(seed, chunk size) only, never on the number of worker threads.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Sequence, Tuple, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

DEFAULT_CHUNK = 1 << 16

# sub-stream tags
INNOVATIONS = 1
SIGNS = 2
MARKS = 3
SELECT = 4
TAIL = 5
CALIBRATION = 6
SPARSE = 7


def stream(seed: int, *key: int) -> np.random.Generator:
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), *key])))


def chunks(n: int, chunk_size: int = DEFAULT_CHUNK) -> List[Tuple[int, int, int]]:
    """(chunk index, start, stop) triples covering ``range(n)``."""
    if chunk_size <= 0:
        raise ValueError("chunk_size must be positive")
    return [(c, s, min(s + chunk_size, n)) for c, s in enumerate(range(0, n, chunk_size))]


def pmap(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def pareto(rng: np.random.Generator, alpha: float, size) -> np.ndarray:
    """Pareto(alpha) on [1, inf) by inverse CDF."""
    u = 1.0 - rng.random(size)  # (0, 1]
    return u ** (-1.0 / alpha)


def signs(rng: np.random.Generator, p: float, size) -> np.ndarray:
    return np.where(rng.random(size) < p, 1.0, -1.0)


def concat(parts: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate(parts) if parts else np.empty(0)
