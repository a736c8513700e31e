"""Deterministic random streams for chunked Monte Carlo.

Trials are split into fixed-size chunks and every chunk gets its own
generator keyed by ``(seed, *key, chunk_index)``, so results do not depend on
how chunks are scheduled across workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterator, Sequence, TypeVar

import numpy as np

CHUNK = 1 << 16

T = TypeVar("T")


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def chunks(total: int, chunk: int = CHUNK) -> Iterator[tuple[int, int]]:
    """Yield ``(chunk_index, size)`` covering ``total`` trials."""
    for i, start in enumerate(range(0, total, chunk)):
        yield i, min(chunk, total - start)


def map_chunks(
    fn: Callable[[np.random.Generator, int], T],
    total: int,
    seed: int,
    key: Sequence[int] = (),
    workers: int = 1,
    chunk: int = CHUNK,
) -> list[T]:
    """Apply ``fn(rng, size)`` to every chunk, returning results in chunk order."""
    jobs = [(stream(seed, *key, i), n) for i, n in chunks(total, chunk)]
    if workers <= 1 or len(jobs) == 1:
        return [fn(rng, n) for rng, n in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
