"""Keyed pseudorandom streams (AES-256 in counter mode).

Every random draw in the framework goes through :class:`Prg` so that a
seeded run is reproducible while an unseeded one draws its key from the OS.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes


def derive_key(*parts: object) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x00")
    return h.digest()


class Prg:
    """AES-CTR keystream with typed draws.  ``drawn`` counts bytes consumed."""

    def __init__(self, key: bytes | None = None):
        self.deterministic = key is not None
        key = os.urandom(32) if key is None else key
        if len(key) != 32:
            key = hashlib.sha256(key).digest()
        self._enc = Cipher(algorithms.AES(key), modes.CTR(b"\x00" * 16)).encryptor()
        self.drawn = 0

    @classmethod
    def from_seed(cls, *parts: object) -> "Prg":
        return cls(derive_key(*parts))

    def bytes(self, n: int) -> bytes:
        self.drawn += n
        return self._enc.update(b"\x00" * n)

    def uint64(self, shape=()) -> np.ndarray:
        size = int(np.prod(shape, dtype=np.int64))
        return np.frombuffer(self.bytes(8 * size), dtype="<u8").astype(np.uint64).reshape(shape)

    def below(self, modulus: int, shape=()) -> np.ndarray:
        """Uniform integers in [0, modulus) as uint64."""
        raw = self.uint64(shape)
        if modulus == 1 << 64:
            return raw
        if modulus & (modulus - 1) == 0:
            return raw & np.uint64(modulus - 1)
        # bias is at most modulus / 2^64
        return raw % np.uint64(modulus)

    def bits(self, shape=()) -> np.ndarray:
        return (self.below(2, shape)).astype(np.uint8)

    def nonzero_field(self, p: int, shape=()) -> np.ndarray:
        """Uniform elements of Z_p^*."""
        return (np.uint64(1) + self.below(p - 1, shape)).astype(np.int64)

    def permutations(self, count: int, length: int) -> np.ndarray:
        """``count`` independent uniform permutations of ``range(length)``."""
        keys = self.uint64((count, length))
        return np.argsort(keys, axis=-1, kind="stable")

    def generator(self) -> np.random.Generator:
        """A numpy generator seeded from the stream, for real-valued draws."""
        seed = int.from_bytes(self.bytes(16), "little")
        return np.random.default_rng(seed)
