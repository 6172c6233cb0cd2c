"""Counter-based random words.

Every draw is addressed by ``(seed, replicate, domain, position)`` and produced
by a Philox4x64 block cipher, so a value never depends on how many other values
were requested before it or on which thread asked for it.
"""
from __future__ import annotations

import numpy as np

# stream domains; stored in the top 64 bits of the Philox counter
ENV = 1
COMM = 2
INIT = 3
ADVERSARY = 4
POPULATION = 5

_U64 = (1 << 64) - 1
_WORDS_PER_BLOCK = 4


def _check_key(seed: int, replicate: int) -> None:
    if not (0 <= seed <= _U64):
        raise ValueError(f"seed must be in [0, 2**64), got {seed}")
    if not (0 <= replicate <= _U64):
        raise ValueError(f"replicate must be in [0, 2**64), got {replicate}")


def words(seed: int, replicate: int, domain: int, start: int, count: int) -> np.ndarray:
    """Return ``count`` uint64 words at positions ``start .. start+count-1``."""
    _check_key(seed, replicate)
    if start < 0 or count < 0:
        raise ValueError("start and count must be nonnegative")
    block, offset = divmod(start, _WORDS_PER_BLOCK)
    bitgen = np.random.Philox(key=[seed, replicate], counter=(domain << 192) | block)
    raw = bitgen.random_raw(offset + count)
    return raw[offset:]


def to_unit(w: np.ndarray) -> np.ndarray:
    """Map uint64 words to doubles uniform on [0, 1) using the top 53 bits."""
    return (w >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def uniforms(seed: int, replicate: int, domain: int, start: int, count: int) -> np.ndarray:
    return to_unit(words(seed, replicate, domain, start, count))
