"""Named, seedable random streams.

Every stochastic component draws from a stream derived from
(seed, purpose tag, index), so any draw can be reproduced bit-exactly on any
platform without threading generator state through call sites.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, tag: str, index: int = 0) -> int:
    """Collision-resistant child seed for the (seed, tag, index) stream."""
    material = f"{seed}|{tag}|{index}".encode("utf-8")
    digest = hashlib.sha256(material).digest()
    return int.from_bytes(digest[:16], "little")


def derive_rng(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent PCG64 generator for the (seed, tag, index) stream."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, tag, index)))
