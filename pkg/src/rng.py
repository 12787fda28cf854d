"""
Seeded random streams.

Every random draw in lmrn comes from a PCG64 generator built from
``SeedSequence([seed, stream])``. A run uses a fixed stream per purpose so
that adding a new consumer never shifts the draws of an existing one.
"""

import numpy as np

from errors import DomainError

# Stream numbers per purpose.
DATA_STREAM = 0
INIT_STREAM = 1


def make_rng(seed: int, stream: int = DATA_STREAM) -> np.random.Generator:
    """
    Build the generator for one (seed, stream) pair.

    Args:
        seed: Non-negative run seed
        stream: Purpose-specific stream number

    Returns:
        A numpy Generator backed by PCG64
    """
    if seed < 0 or stream < 0:
        raise DomainError(f"seed and stream must be non-negative, got {seed}, {stream}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))
