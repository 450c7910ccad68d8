"""Seeded, splittable random streams (numpy PCG64)."""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for ``seed`` and an optional spawn key path.

    Different keys give statistically independent streams, so a tracker and
    a workload generator seeded from the same run seed never share draws.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


# spawn-key slots, fixed so traces stay reproducible across versions
STREAM_TRACKER = 1
STREAM_WORKLOAD = 2
STREAM_SEARCH = 3
