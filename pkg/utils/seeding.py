"""Deterministic random generators.

All randomness flows through numpy Generators backed by the counter-based
Philox bit generator, so runs reproduce across platforms. Child generators
are split off with ``Generator.spawn`` and never share a stream.
"""
import numpy as np


def make_rng(seed):
    """Create a Philox-backed Generator for an integer seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def spawn(rng, n):
    """Split ``n`` independent child generators off ``rng``."""
    return rng.spawn(n)


def derive_seed(seed, *keys):
    """Stable integer seed derived from a base seed and integer keys."""
    entropy = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return int(entropy.generate_state(1, dtype=np.uint64)[0])
