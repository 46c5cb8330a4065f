"""Deterministic named RNG substreams.

All randomness in a run is derived from one integer seed. Each consumer
(init, per-epoch shuffle, per-epoch dropout, ...) gets its own substream
keyed by name so that adding a consumer never perturbs the others, and so
that training can be resumed at an epoch boundary bit-exactly.
"""

import hashlib

import numpy as np


def substream(seed: int, *key) -> np.random.Generator:
    """Generator for the substream identified by (seed, *key).

    Key parts may be strings or ints; they are hashed, so any two distinct
    keys give independent streams and the mapping is stable across runs
    and platforms.
    """
    tag = "/".join(str(k) for k in key)
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    words = np.frombuffer(digest[:16], dtype=np.uint32).tolist()
    ss = np.random.SeedSequence(entropy=[int(seed) & 0xFFFFFFFFFFFFFFFF] + words)
    return np.random.Generator(np.random.PCG64(ss))


def spawn_seed(seed: int, *key) -> int:
    """Derive a child integer seed (for independent --runs repetitions)."""
    return int(substream(seed, *key).integers(0, 2**63 - 1))
