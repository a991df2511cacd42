"""Deterministic random-generator derivation for reproducible experiments."""

from __future__ import annotations

import numpy as np

__all__ = ["spawn_rng", "derive_seed"]


def spawn_rng(master_seed: int, *path: int) -> np.random.Generator:
    """Return a generator keyed by ``(master_seed, *path)``.

    Trials, grid points and sampling chains each get their own path so that
    results are independent of execution order and worker count.
    """
    return np.random.default_rng(np.random.SeedSequence((master_seed, *path)))


def derive_seed(master_seed: int, *path: int) -> int:
    """Collapse ``(master_seed, *path)`` into a single 32-bit seed."""
    return int(np.random.SeedSequence((master_seed, *path)).generate_state(1)[0])
