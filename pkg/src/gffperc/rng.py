"""Counter-based random streams keyed by (seed, experiment, sample).

Each Monte Carlo sample owns an independent Philox stream derived from the
master seed and its position, so results never depend on how samples are
distributed over workers.
"""
from __future__ import annotations

import hashlib

import numpy as np


def experiment_key(name: str) -> int:
    """Stable 32-bit integer for an experiment label."""
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def sample_stream(seed: int, experiment: str, index: int) -> np.random.Generator:
    return stream(seed, experiment_key(experiment), index)
