"""
Seeded random generators

Each component draws from its own generator, derived from the run seed and
a purpose tag, so switching one component off never shifts another
component's random draws.
"""
from typing import Union

import numpy as np
from sklearn.utils import murmurhash3_32


def derive_rng(seed: int, purpose: str, *extra: int) -> np.random.Generator:
    """
    Build an independent generator for one purpose.

    Args:
        seed: Run seed
        purpose: Stable tag naming the consumer (e.g. "blur", "buffers")
        extra: Additional integers folded into the entropy (sample ids, epochs)

    Returns:
        A numpy Generator whose stream depends only on the arguments
    """
    tag = murmurhash3_32(purpose, seed=0, positive=True)
    entropy = [int(seed), tag, *(int(x) for x in extra)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def as_rng(rng: Union[np.random.Generator, int, None]) -> np.random.Generator:
    """Accept a Generator or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)