"""Seeded random streams.

All randomness comes from numpy's Philox4x64-10 counter-based bit generator
(Salmon et al., "Parallel random numbers: as easy as 1, 2, 3"), keyed by a
64-bit seed. Seeds for sub-streams are derived by hashing a tuple of labels
with BLAKE2b, so a cell's stream depends only on its identity, not on the
order in which cells are executed.
"""

from __future__ import annotations

import hashlib

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & 0xFFFFFFFFFFFFFFFF))


def derive_seed(*labels) -> int:
    text = "\x1f".join(str(x) for x in labels).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")
