"""Deterministic RNG stream derivation.

Every randomized component draws from a generator derived from the run seed
plus integer keys (stream id, round, client, ...), so parallel and serial
execution of independent units give identical results.
"""

from __future__ import annotations

import numpy as np

# Stream ids keep unrelated consumers of the same (seed, round, client)
# tuple statistically independent.
STREAM_PROJECTION = 1
STREAM_PARTITION = 2
STREAM_SAMPLING = 3
STREAM_LOCAL = 4
STREAM_CHANNEL = 5
STREAM_STRATEGY = 6
STREAM_SYNTH = 7


def derived_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator seeded from (seed, *keys). Identical inputs, identical stream."""
    entropy = [int(seed)] + [int(k) for k in keys]
    if any(e < 0 for e in entropy):
        raise ValueError(f"seed material must be non-negative, got {entropy}")
    return np.random.default_rng(np.random.SeedSequence(entropy))
