"""Counter-based, splittable random streams.

Every random draw in the package goes through :func:`stream`, which keys a
Philox generator by ``(master seed, purpose tag, index...)``. Two streams with
different tags or indices never overlap, so Monte Carlo replicas can be
scheduled in any order and still reproduce bit-for-bit.

Gaussian variates come from ``numpy.random.Generator.standard_normal``
(ziggurat method); regression fixtures depend on that choice.
"""
from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def tag_code(tag: str) -> int:
    """Stable 32-bit code of a purpose tag (crc32, independent of PYTHONHASHSEED)."""
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str, *index: int) -> np.random.Generator:
    if seed < 0 or seed > _MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    for i in index:
        if i < 0:
            raise ValueError(f"stream indices must be nonnegative, got {index}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag_code(tag), *map(int, index)))
    key = ss.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
