"""Seed management: counter-based substreams derived from one master seed.

Every stochastic routine in the package takes either a seed (int) or an
``numpy.random.Generator``.  Substreams are derived with Philox keyed through
``SeedSequence.spawn``-style keys, so a master seed plus a stream label fully
determines the stream regardless of how many other streams were created or in
which order they are consumed.
"""

from __future__ import annotations

import numpy as np

__all__ = ["generator", "substream", "child_seed", "replica_seeds"]


def child_seed(seed, *key):
    """SeedSequence for the child stream `key` of `seed` (int, tuple of ints,
    or SeedSequence); never mutates the parent's spawn state."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(key)
        )
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))


def generator(seed):
    """Return a Philox Generator. `seed` may be an int, a SeedSequence, or an
    existing Generator (returned unchanged)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def substream(master_seed, *key):
    """Generator for the substream identified by `key` under `master_seed`.

    Keys are small tuples of non-negative ints (e.g. (kind, replica)).  The
    same (master_seed, key) always yields the same stream, independent of any
    other substreams drawn.  `master_seed` may be an int or a SeedSequence
    (whose spawn state is not mutated).
    """
    if isinstance(master_seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(
            entropy=master_seed.entropy,
            spawn_key=tuple(master_seed.spawn_key) + tuple(key),
        )
    else:
        ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


def replica_seeds(master_seed, n, stream=0):
    """n per-replica SeedSequences under (master_seed, stream)."""
    return [
        np.random.SeedSequence(entropy=master_seed, spawn_key=(stream, i))
        for i in range(n)
    ]
