"""Seed derivation and random streams.

Every random stream in the package is a Philox4x64-10 counter-based
generator (numpy's ``Philox``) keyed by a 64-bit value derived from the
global seed and a path of keys::

    key = little_endian_u64(blake2b("/".join([str(seed), *map(str, keys)]), digest_size=8))

so any stage, fold or item stream can be regenerated on its own, and
results do not depend on the order in which streams are consumed.
"""
from __future__ import annotations

import hashlib

import numpy as np

ALGORITHM = "philox4x64-10, key=blake2b-64(seed/key/...)"


def derive_seed(seed: int, *keys) -> int:
    text = "/".join([str(int(seed)), *(str(k) for k in keys)])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed: int, *keys) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, *keys)))
