"""Seeded, splittable random streams.

All stochastic operations in the package draw from counter-based Philox
generators keyed by (seed, branch...).  Two calls with the same key produce
byte-identical streams, independently of call order elsewhere, which is what
makes benchmark tables and CLI outputs reproducible.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *branch: int) -> np.random.Generator:
    """Return a Generator on an independent stream keyed by (seed, branch...)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(b) for b in branch))
    return np.random.Generator(np.random.Philox(seed=ss))
