"""Shared helpers: deterministic seed derivation and numeric failure reporting."""

from __future__ import annotations

import numpy as np


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


def seed_from(*parts: int) -> int:
    """Derive a 64-bit seed from a tuple of integers.

    Every stochastic step in the pipeline derives its seed through this
    function so that runs are reproducible and independent steps do not
    share random streams.
    """
    ss = np.random.SeedSequence(list(parts))
    state = ss.generate_state(2, dtype=np.uint64)
    return int(state[0] ^ (state[1] >> 1))


def rng_from(*parts: int) -> np.random.Generator:
    """Generator seeded from a tuple of integers (see :func:`seed_from`)."""
    return np.random.default_rng(np.random.SeedSequence(list(parts)))
