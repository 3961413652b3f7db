"""Named random sub-streams derived from a single experiment seed.

Every consumer of randomness asks for a stream by name (``"dataset"``,
``"init"``, ``"batching"``, ``"attacker"``, ...), so adding a new consumer
never perturbs the draws seen by existing ones.
"""
import zlib

import numpy as np


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, name, *extra)``."""
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode("utf-8"))]
    key.extend(int(e) for e in extra)
    return np.random.default_rng(np.random.SeedSequence(key))
