"""Deterministic parallel random streams.

Every random quantity in the package is drawn from a stream derived by
counter-based mixing of a master seed with integer identifiers (experiment
id, replication index, ...).  Streams are independent of thread count and
scheduling order: a task's stream depends only on its identifiers, never on
which worker runs it or when.
"""
from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def mix64(*words: int) -> int:
    """Mix integer words into a single 64-bit value (splitmix64 finalizer).

    The mixing is associative-free: ``mix64(a, b) != mix64(b, a)`` in
    general, so distinct identifier tuples give unrelated outputs.
    """
    acc = 0x9E3779B97F4A7C15
    for w in words:
        z = (acc + (int(w) & _MASK64) * 0xBF58476D1CE4E5B9) & _MASK64
        z ^= z >> 30
        z = (z * 0x94D049BB133111EB) & _MASK64
        z ^= z >> 31
        acc = z
    return acc


def stream(master_seed: int, *ids: int) -> np.random.Generator:
    """Return the generator for the sub-stream identified by ``ids``.

    Uses the Philox counter-based bit generator keyed by the mixed words,
    so streams with different identifiers never overlap in practice.
    """
    key = mix64(master_seed, *ids)
    # A second mix decorrelates the key from any arithmetic structure in ids.
    return np.random.Generator(np.random.Philox(key=[key, mix64(key, 0x5EED)]))
