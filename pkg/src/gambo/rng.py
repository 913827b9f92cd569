"""Seed-derivation scheme: one root seed fans out into component streams.

Streams are derived as ``SeedSequence([root_seed, component, *extra])`` so
that components never share draws and any stream can be reconstructed from
the root seed alone. Component codes are stable across releases.
"""

from __future__ import annotations

import numpy as np

DATASET = 1
SURROGATE = 2
CRITIC_INIT = 3
CRITIC_TRAIN = 4
ASCR = 5
GP = 6
ANNEAL = 7
PATIENT = 8


def stream(*keys: int) -> np.random.Generator:
    """Independent generator for the given (root_seed, component, ...) key."""
    return np.random.default_rng(np.random.SeedSequence(list(keys)))


def derived_seed(*keys: int) -> int:
    """Deterministic integer seed for APIs that take a plain seed."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])
