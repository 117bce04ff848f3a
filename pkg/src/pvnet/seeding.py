"""Counter-based random streams.

Every random draw in pvnet comes from ``stream(seed, label, *counters)``.
A stream depends only on its key, never on how many draws happened
elsewhere, so results do not depend on evaluation order or thread count.
"""
import zlib

import numpy as np


def stream(seed, label, *counters):
    """Return an independent generator keyed by ``(seed, label, *counters)``."""
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(label.encode("utf-8"))]
    key.extend(int(c) for c in counters)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))
