"""Named, deterministic RNG substreams.

Every random draw in dicelab flows from one 64-bit seed. A substream is
identified by a string such as ``"sampler/3"``; the same (seed, name) pair
always yields the same generator, independent of how many workers run.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name: str) -> tuple[int, ...]:
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=16).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


def substream(seed: int, name: str) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=_name_key(name))
    return np.random.Generator(np.random.PCG64(seq))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a 63-bit seed from ``rng`` for handing to a nested routine."""
    return int(rng.integers(0, 2**63 - 1))
