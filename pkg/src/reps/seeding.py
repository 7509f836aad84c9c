"""Context-keyed deterministic RNG derivation.

Every stochastic step in the pipeline draws from an RNG derived from
(master seed, context key...) via a stable hash, so results never depend on
call order, thread scheduling, or PYTHONHASHSEED.
"""

import hashlib
import random

import numpy as np

_SEP = b"\x1f"


def stable_hash64(*parts) -> int:
    """Stable 64-bit hash of the stringified parts."""
    payload = _SEP.join(str(p).encode("utf-8") for p in parts)
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def derive_rng(seed, *parts) -> random.Random:
    """Independent stdlib RNG stream for the given context."""
    return random.Random(stable_hash64(seed, *parts))


def derive_numpy_rng(seed, *parts) -> np.random.Generator:
    """Independent numpy Generator stream for the given context."""
    return np.random.default_rng(stable_hash64(seed, *parts))
