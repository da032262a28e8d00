"""Deterministic, splittable random-number streams.

All randomness in this package flows through numpy's PCG64 generator seeded
through ``SeedSequence(master_seed, spawn_key=stream)``. Substreams keyed by
integer tuples are statistically independent and platform stable, so every
sequence of draws is a pure function of (master seed, stream key, draw order)
and never depends on wall clock, process layout, or thread count. Simulation
replication ``r`` always uses stream key ``(r,)``, which is what makes
multi-threaded runs bit-identical to single-threaded ones.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return a PCG64 generator for the given master seed and stream key."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def replication_rngs(seed: int, replication: int, n_streams: int = 2):
    """Independent generators for one simulation replication.

    Stream 0 drives sampling, stream 1 drives treatment assignment; keeping
    them separate means changing the randomization scheme never perturbs the
    sampled patients.
    """
    root = np.random.SeedSequence(seed, spawn_key=(replication,))
    return [np.random.default_rng(child) for child in root.spawn(n_streams)]
