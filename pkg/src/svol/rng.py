"""Seeded random streams.

Every random draw in the package comes from a generator built here, keyed by
the master seed plus a path of integers (e.g. ``(seed, CLIP, index)``). Two
streams with different keys are statistically independent; the same key always
reproduces the same stream.
"""
from __future__ import annotations

import numpy as np

# stream tags
PARAMS = 1
CLIP = 2
SKETCH = 3
SPLIT = 4
BATCH = 5
DROPOUT = 6
LAYOUT = 7


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))
