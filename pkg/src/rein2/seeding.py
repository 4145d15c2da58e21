"""Deterministic seed derivation.

Every random decision in a run is drawn from a stream derived from
(run seed, purpose tag[, index...]) through ``numpy.random.SeedSequence``,
so runs replay bit-for-bit and independent streams never collide.
"""

from __future__ import annotations

import numpy as np

_U64 = 1 << 64

# Purpose tags; values are part of the reproducibility contract, never reuse.
STREAM_MASK = 1
STREAM_BASE_PARAMS = 2
STREAM_ACTOR = 3
STREAM_CRITIC = 4
STREAM_ACTIONS = 5
STREAM_SHUFFLE = 6
STREAM_EVAL = 7
STREAM_TRAIN_ENV = 8
STREAM_EVAL_GREEDY = 9
STREAM_EVAL_STOCH = 10


def as_u64(seed: int) -> int:
    """Fold an arbitrary Python int (possibly negative) into [0, 2**64)."""
    return int(seed) % _U64


def derive_seed(*parts: int) -> int:
    """Hash a tuple of integers into a single uint64 seed."""
    ss = np.random.SeedSequence([as_u64(p) for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def derive_rng(*parts: int) -> np.random.Generator:
    """A fresh PCG64 generator keyed by the given integers."""
    return np.random.default_rng(np.random.SeedSequence([as_u64(p) for p in parts]))
