"""Counter-based random streams.

Every sampled quantity in the package draws from a Philox stream keyed by
``(seed, *path)``.  The path names the consumer and a chunk index, so the
numbers a computation sees never depend on how work is scheduled.
"""

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _word(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & _MASK64


def stream(seed, *path):
    """Return a fresh generator for ``(seed, *path)``."""
    key = [_word(seed)] + [_word(p) for p in path]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def child_seed(seed, *path):
    """Derive a 63-bit integer seed, e.g. for a ladder rung or a multistart."""
    ss = np.random.SeedSequence([_word(seed)] + [_word(p) for p in path])
    return int(ss.generate_state(1, dtype=np.uint64)[0]) >> 1
