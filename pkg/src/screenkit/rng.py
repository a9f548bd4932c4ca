"""Deterministic parallel random draws.

Draws are produced in fixed-size chunks, each chunk from its own Philox
substream keyed by ``(seed, chunk_index, stream_id)``.  The result is
bitwise identical whether chunks are generated serially or by a thread
pool, and independent streams can be redrawn or dropped without
disturbing one another (the common-random-numbers contract used by the
counterfactual machinery).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 1 << 17

# stream ids, one per simulated variable
STREAM_THETA = 0
STREAM_SIGNAL = 1  # signal k uses STREAM_SIGNAL + k - 1
STREAM_DEFAULT = 8


def _generator(seed: int, chunk: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, chunk, stream))))


def _fill(seed, n, stream, kind, threads):
    n = int(n)
    n_chunks = (n + CHUNK - 1) // CHUNK
    out = np.empty(n, dtype=np.float64)

    def one(c):
        lo = c * CHUNK
        hi = min(lo + CHUNK, n)
        g = _generator(seed, c, stream)
        if kind == "normal":
            out[lo:hi] = g.standard_normal(hi - lo)
        else:
            out[lo:hi] = g.random(hi - lo)

    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(one, range(n_chunks)))
    else:
        for c in range(n_chunks):
            one(c)
    return out


def substream_normal(seed: int, n: int, stream: int, threads: int = 1) -> np.ndarray:
    """n standard-normal draws from the (seed, stream) substream."""
    return _fill(seed, n, stream, "normal", threads)


def substream_uniform(seed: int, n: int, stream: int, threads: int = 1) -> np.ndarray:
    """n U(0,1) draws from the (seed, stream) substream."""
    return _fill(seed, n, stream, "uniform", threads)
