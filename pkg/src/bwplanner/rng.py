"""Named random streams on top of the counter-based Philox generator.

Every consumer of randomness asks for a stream by name.  A stream is fully
determined by ``(seed, name, replication)`` so that adding a new consumer
never shifts the draws seen by an existing one.
"""
import zlib

import numpy as np


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, name: str, replication: int = 0) -> np.random.Generator:
    """Return an independent generator for one named consumer."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replication), _name_key(name)))
    return np.random.Generator(np.random.Philox(ss))
