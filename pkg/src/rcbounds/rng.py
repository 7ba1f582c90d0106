"""Counter-based random streams keyed by (seed, scenario key, block index).

Every Monte Carlo run splits its replicates into fixed-size blocks.  Block
``k`` always draws from the Philox stream keyed by ``(seed, key, k)``, so the
concatenated replicate vector is the same whichever worker computed which
block, and however many workers there were.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

WORKERS_ENV = "RCBOUNDS_WORKERS"
_MASK64 = (1 << 64) - 1


def stable_hash(obj) -> int:
    """64-bit hash of a JSON-serialisable object, stable across processes."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return int.from_bytes(hashlib.sha256(blob.encode()).digest()[:8], "little")


@dataclass(frozen=True)
class Stream:
    """A named family of substreams.

    ``key`` may be any JSON-serialisable object describing what is being
    simulated; it is hashed so distinct scenarios never share draws.
    """

    seed: int
    key: object = "default"

    def child(self, *extra) -> "Stream":
        return Stream(self.seed, [self.key, *extra])

    def generator(self, block: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=int(self.seed) & _MASK64,
            spawn_key=(stable_hash(self.key), int(block)),
        )
        return np.random.Generator(np.random.Philox(ss))


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def block_sizes(reps: int, block: int) -> list[int]:
    full, rest = divmod(reps, block)
    return [block] * full + ([rest] if rest else [])


def run_blocks(
    fn: Callable[[np.random.Generator, int], np.ndarray],
    reps: int,
    stream: Stream,
    block: int = 4096,
    workers: int | None = None,
) -> np.ndarray:
    """Evaluate ``fn(rng, count)`` over replicate blocks and concatenate.

    ``fn`` returns one value (or row) per replicate.  Output order follows the
    block index, never completion order.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    sizes = block_sizes(reps, block)
    workers = default_workers() if workers is None else max(1, int(workers))

    def job(k: int) -> np.ndarray:
        return np.asarray(fn(stream.generator(k), sizes[k]))

    if workers == 1 or len(sizes) == 1:
        parts = [job(k) for k in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    return np.concatenate(parts)
