"""Deterministic RNG stream derivation.

Every random draw in the package comes from a numpy Generator derived from an
integer seed plus a stable string tag, so independent components never share a
stream and reruns are bit-identical regardless of call order elsewhere.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_to_ints(tag: str) -> list[int]:
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=16).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def seed_sequence(seed: int, *tags: object) -> np.random.SeedSequence:
    """SeedSequence for `seed` refined by any number of int/str tags."""
    entropy: list[int] = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for tag in tags:
        if isinstance(tag, str):
            entropy.extend(_tag_to_ints(tag))
        else:
            entropy.append(int(tag) & 0xFFFFFFFFFFFFFFFF)
    return np.random.SeedSequence(entropy)


def rng_from(seed: int, *tags: object) -> np.random.Generator:
    """Independent PCG64 stream for (seed, tags...)."""
    return np.random.default_rng(seed_sequence(seed, *tags))


def spawn_seed(seed: int, *tags: object) -> int:
    """Derive a child integer seed (for storing in files / passing around)."""
    return int(rng_from(seed, *tags).integers(0, 2**63 - 1))
