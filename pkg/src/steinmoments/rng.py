"""Reproducible per-replicate random streams."""

from __future__ import annotations

import numpy as np

# stream namespaces
REPLICATES = 0
PILOT = 1


def replicate_rng(seed: int, index: int, namespace: int = REPLICATES) -> np.random.Generator:
    """Independent Philox stream for replicate (or batch) ``index`` of ``seed``.

    Streams depend only on (seed, namespace, index), so work can be split
    across any number of workers without changing results.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(namespace), int(index)))
    return np.random.Generator(np.random.Philox(ss))
