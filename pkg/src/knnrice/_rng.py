"""Seed bookkeeping shared by the Monte Carlo stages.

Every random stream is built from a master seed plus a tuple of integer
counters (run index, trial index, ...) via ``numpy.random.SeedSequence``'s
``spawn_key``. Streams keyed by distinct counters are statistically
independent, and any single stream can be rebuilt without replaying the
others, which is what makes sweeps and campaigns resumable and
order-independent.
"""

from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence, None]


def derive_seed(master: SeedLike, *keys: int) -> np.random.SeedSequence:
    """Child seed for counter path ``keys`` under ``master``."""
    if isinstance(master, np.random.SeedSequence):
        return np.random.SeedSequence(
            master.entropy, spawn_key=tuple(master.spawn_key) + tuple(int(k) for k in keys)
        )
    return np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in keys))


def as_generator(seed: SeedLike) -> np.random.Generator:
    return np.random.default_rng(seed)


def describe(seed: SeedLike) -> str:
    """Short text form of a seed, for CSV provenance lines."""
    if isinstance(seed, np.random.SeedSequence):
        keys = "/".join(str(k) for k in seed.spawn_key)
        return f"{seed.entropy}" + (f"/{keys}" if keys else "")
    return str(seed)
