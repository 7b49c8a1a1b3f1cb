"""Splittable stream derivation for reproducible serial and parallel runs.

Every random draw in the package comes from a stream keyed by
``(seed, purpose...)`` through :class:`numpy.random.SeedSequence`, so the
same seed produces the same numbers regardless of evaluation order or
thread count.
"""
from __future__ import annotations

import numpy as np

from .exceptions import ConfigError

# purpose tags for the streams a single simulated path may consume
ERRORS = 0
REGRESSORS = 1

# namespace tags used when deriving child seeds from a master seed
NS_REP = 0
NS_DESIGN = 1


def _sequence(seed: int, key: tuple) -> np.random.SeedSequence:
    seed = int(seed)
    if seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed}")
    return np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream addressed by ``(seed, key)``.

    Distinct keys yield statistically independent streams; identical
    ``(seed, key)`` pairs yield bit-identical draws.
    """
    return np.random.default_rng(_sequence(seed, key))


def derive_seed(seed: int, *key: int) -> int:
    """64-bit child seed for ``(seed, key)``.

    Counter-style: the child depends only on the key, never on how many
    other children were derived, so parallel and serial derivations agree.
    """
    return int(_sequence(seed, key).generate_state(1, np.uint64)[0])
