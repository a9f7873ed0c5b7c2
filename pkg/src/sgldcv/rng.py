"""Named, reproducible random streams derived from one master seed."""
import zlib

import numpy as np


def _key(name):
    if isinstance(name, (int, np.integer)):
        return int(name)
    return zlib.crc32(str(name).encode("utf-8"))


def stream(seed, *names):
    """Return a Generator for the sub-stream ``names`` of ``seed``.

    ``stream(1, "chain", 3)`` is independent of ``stream(1, "chain", 4)`` and
    of ``stream(1, "optimize")``, and identical across runs and processes.
    """
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(n) for n in names))
    return np.random.Generator(np.random.PCG64(seq))
