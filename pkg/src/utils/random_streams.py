"""
Hierarchical random streams.

One root seed is split per replicate, then per engine, so a replicate can be
re-run in isolation and results do not depend on scheduling order.
"""
from typing import List, Optional

import numpy as np


def make_rng(seed: Optional[int] = None) -> np.random.Generator:
    """Create a PCG64 generator from an integer seed."""
    return np.random.default_rng(seed)


def replicate_stream(root_seed: int, replicate: int) -> np.random.SeedSequence:
    """Seed sequence of replicate ``replicate`` under ``root_seed``."""
    if replicate < 0:
        raise ValueError(f"replicate index must be non-negative, got {replicate}")
    return np.random.SeedSequence(entropy=root_seed, spawn_key=(replicate,))


def spawn_streams(seed_sequence: np.random.SeedSequence, count: int) -> List[np.random.Generator]:
    """Split a seed sequence into ``count`` independent generators."""
    return [np.random.default_rng(child) for child in seed_sequence.spawn(count)]
