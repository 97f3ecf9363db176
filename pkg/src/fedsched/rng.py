"""Counter-based random streams keyed by (master seed, purpose, index).

Every stream is a Philox generator seeded from a SeedSequence whose spawn
key names what the stream is for, so results never depend on how work is
split across threads or on the order in which streams are created.
"""

from __future__ import annotations

import zlib

import numpy as np


def tag_id(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag)
    return zlib.crc32(str(tag).encode("utf-8"))


def stream(master_seed: int, *key) -> np.random.Generator:
    """Independent generator for ``key`` (ints or strings) under ``master_seed``."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(tag_id(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(master_seed: int, *key) -> int:
    """A 63-bit integer seed for sub-run ``key`` under ``master_seed``."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(tag_id(k) for k in key))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
