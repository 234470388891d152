"""
Seeded random number generators for reproducible tree sampling.

Every random draw in treesliced goes through a ``numpy.random.Generator``
backed by the counter-based Philox bit generator. A run is a pure function of
its 64-bit seed: the same seed yields bit-identical trees on every platform
numpy supports.
"""

import numpy as np

SEED_BITS = 64


def make_rng(seed: int) -> np.random.Generator:
    """
    Create the generator used for one estimator call or experiment.

    Args:
        seed: Non-negative integer below 2**64

    Returns:
        Philox-backed generator
    """
    if seed < 0 or seed >= 2 ** SEED_BITS:
        raise ValueError(f"Seed must fit in {SEED_BITS} unsigned bits, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    Create an independent child stream, e.g. one per flow step.

    Children with different keys are statistically independent and do not
    depend on how many draws the parent made.

    Args:
        seed: Parent seed
        *keys: Spawn key identifying the child (step index, run index, ...)

    Returns:
        Philox-backed generator for the child stream
    """
    if seed < 0 or seed >= 2 ** SEED_BITS:
        raise ValueError(f"Seed must fit in {SEED_BITS} unsigned bits, got {seed}")
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(sequence))


def draw_seed(rng: np.random.Generator) -> int:
    """Draw a 31-bit integer seed for libraries that only accept ints."""
    return int(rng.integers(0, 2 ** 31 - 1))
