"""Per-path random streams.

Each Monte Carlo path owns a Philox (counter-based) generator keyed by a
``SeedSequence`` spawned from the master seed with the path index as spawn
key.  The stream for path ``i`` depends only on ``(master_seed, i)``, never
on how paths are scheduled across workers.
"""
from __future__ import annotations

import numpy as np

__all__ = ["derive_stream", "MAX_SEED"]

MAX_SEED = 2**64 - 1


def derive_stream(master_seed: int, path_index: int) -> np.random.Generator:
    if not 0 <= master_seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer (got {master_seed})")
    if path_index < 0:
        raise ValueError(f"path_index must be >= 0 (got {path_index})")
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(path_index,))
    return np.random.Generator(np.random.Philox(ss))
