"""Deterministic random stream derivation.

Every stochastic component draws from its own named substream derived from the
run seed, so adding users, steps, or components never perturbs the draws of
existing ones.
"""

import hashlib

import numpy as np


def stable_hash(text: str) -> int:
    """Process-independent 128-bit integer digest of a string."""
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:16], "big")


def substream(*parts) -> np.random.Generator:
    """Generator keyed by a tuple of ints and strings.

    Strings are hashed with sha256 (not Python's salted hash), ints pass
    through, so streams are reproducible across processes and platforms.
    """
    entropy = [stable_hash(p) if isinstance(p, str) else int(p) for p in parts]
    return np.random.default_rng(np.random.SeedSequence(entropy))
