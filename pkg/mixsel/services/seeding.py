"""
mixsel.services.seeding

Stream splitting: every random draw in a study comes from

    stream(master_seed, label, index)

which maps to numpy's SeedSequence(entropy=master_seed, spawn_key=(crc32(label), index)).
The mapping is pure, so a replicate's stream does not depend on which thread runs it
or on how many other streams were drawn before it.
"""

from __future__ import annotations

import zlib

import numpy as np

from ..exceptions import InvalidArgument


def _label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8")) & 0xFFFFFFFF


def seed_sequence(master_seed: int, label: str, index: int = 0) -> np.random.SeedSequence:
    if master_seed is None or int(master_seed) < 0:
        raise InvalidArgument("master seed must be a nonnegative integer")
    if index < 0:
        raise InvalidArgument("stream index must be nonnegative")
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(_label_key(label), int(index)))


def stream(master_seed: int, label: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(master_seed, label, index))


def derived_seed(master_seed: int, label: str, index: int = 0) -> int:
    """63-bit integer seed for the (label, index) stream; recorded in records.csv."""
    word = seed_sequence(master_seed, label, index).generate_state(2, dtype=np.uint32)
    return int((int(word[0]) << 31) ^ int(word[1]))
