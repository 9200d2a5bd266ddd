"""Deterministic chunked parallelism.

Work is cut into fixed-size chunks whose random streams are spawned from one
seed, so results never depend on how many workers run the chunks.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

ENV_THREADS = "EQUIDYN_THREADS"
CHUNK = 512


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get(ENV_THREADS, "1") or 1)
    return max(1, int(threads))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def chunk_bounds(total: int, chunk: int = CHUNK) -> list[tuple[int, int]]:
    return [(s, min(s + chunk, total)) for s in range(0, total, chunk)]


def map_chunks(fn: Callable, args: Sequence, threads: int | None = None) -> list:
    """``[fn(a) for a in args]`` with up to ``threads`` workers, order kept."""
    threads = resolve_threads(threads)
    if threads == 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, args))


def seeded_chunks(rng, total: int, chunk: int = CHUNK):
    """Chunk bounds paired with independent generators spawned from ``rng``."""
    gen = as_generator(rng)
    bounds = chunk_bounds(total, chunk)
    return list(zip(bounds, gen.spawn(len(bounds))))
