"""Reproducible random streams.

All randomness goes through Philox4x64-10 (Salmon et al., Random123), a
counter-based generator. A stream is identified by a 128-bit key made of
``(seed, stream index)``, so chunk ``i`` of a Monte Carlo run always sees the
same numbers no matter how many workers process the chunks.

numpy's ``Philox`` pre-increments its counter, so the first block returned by
a fresh stream is the block for counter value 1.
"""

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
_TWO_M52 = 2.0 ** -52


def derive_seed(seed: int, *labels) -> int:
    """Stable 64-bit seed from a parent seed and string/int labels."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed) & MASK64).encode())
    for label in labels:
        h.update(b"\x00")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "little")


def bit_generator(seed: int, stream: int = 0) -> np.random.Philox:
    key = np.array([int(seed) & MASK64, int(stream) & MASK64], dtype=np.uint64)
    return np.random.Philox(key=key)


def generator(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(bit_generator(seed, stream))


def raw_to_open_unit(raw: np.ndarray) -> np.ndarray:
    """Map uint64 words to doubles strictly inside (0, 1).

    Uses the top 52 bits so that the largest value, 1 - 2^-53, is still
    representable below 1.
    """
    return ((raw >> np.uint64(12)).astype(np.float64) + 0.5) * _TWO_M52


class UniformStream:
    """Sequential source of open-interval uniforms from one Philox substream."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & MASK64
        self.stream = int(stream) & MASK64
        self._bitgen = bit_generator(self.seed, self.stream)

    def uniforms(self, n) -> np.ndarray:
        size = int(np.prod(n))
        out = raw_to_open_unit(self._bitgen.random_raw(size))
        return out.reshape(n) if not isinstance(n, int) else out

    def uniform(self) -> float:
        return float(raw_to_open_unit(np.array([self._bitgen.random_raw()], dtype=np.uint64))[0])
