"""Share representations over the three rings and local share algebra.

Arithmetic shares live in Z_{2^n} (full ring) or Z_{2^{n-1}} (half ring) and
are stored as ``uint64`` arrays.  Bitwise shares live in the prime field
Z_67, one share per bit, stored as ``uint8``.  Boolean shares are XOR shares
of single bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numfmt import FixedPointConfig, U64, truncate_share

FIELD_P = 67


class RingMismatchError(TypeError):
    pass


@dataclass(frozen=True)
class Ring:
    """Z_modulus with vectorized arithmetic."""

    modulus: int

    @classmethod
    def full(cls, cfg: FixedPointConfig) -> "Ring":
        return cls(1 << cfg.n)

    @classmethod
    def half(cls, cfg: FixedPointConfig) -> "Ring":
        return cls(1 << (cfg.n - 1))

    @property
    def is_pow2(self) -> bool:
        return self.modulus & (self.modulus - 1) == 0

    @property
    def wide(self) -> bool:
        """Power-of-two rings beyond Z_2 are held in uint64."""
        return self.modulus > 2 and self.is_pow2

    @property
    def dtype(self):
        return np.uint64 if self.wide else np.uint8

    @property
    def width(self) -> int:
        """Bytes per element in the canonical serialization."""
        return 8 if self.wide else 1

    def reduce(self, a) -> np.ndarray:
        if self.wide:
            a = np.asarray(a, dtype=U64)
            if self.modulus == 1 << 64:
                return a
            return a & U64(self.modulus - 1)
        return (np.asarray(a, dtype=np.int64) % self.modulus).astype(np.uint8)

    def add(self, a, b):
        if self.wide:
            return self.reduce(np.asarray(a, dtype=U64) + np.asarray(b, dtype=U64))
        return self.reduce(np.asarray(a, dtype=np.int64) + np.asarray(b, dtype=np.int64))

    def sub(self, a, b):
        if self.wide:
            return self.reduce(np.asarray(a, dtype=U64) - np.asarray(b, dtype=U64))
        return self.reduce(np.asarray(a, dtype=np.int64) - np.asarray(b, dtype=np.int64))

    def mul(self, a, b):
        if self.wide:
            return self.reduce(np.asarray(a, dtype=U64) * np.asarray(b, dtype=U64))
        return self.reduce(np.asarray(a, dtype=np.int64) * np.asarray(b, dtype=np.int64))

    def neg(self, a):
        return self.sub(np.zeros_like(np.asarray(a)), a)

    def random(self, rng, shape=()) -> np.ndarray:
        return self.reduce(rng.below(self.modulus, shape))


FIELD = Ring(FIELD_P)
BOOL = Ring(2)


@dataclass(frozen=True)
class Share:
    """One party's share of a (vector) secret, tagged with its ring."""

    value: np.ndarray
    ring: Ring

    def _check(self, other: "Share") -> None:
        if not isinstance(other, Share) or other.ring != self.ring:
            raise RingMismatchError(f"share over Z_{self.ring.modulus} combined with {other!r}")

    def __add__(self, other: "Share") -> "Share":
        self._check(other)
        return Share(self.ring.add(self.value, other.value), self.ring)

    def __sub__(self, other: "Share") -> "Share":
        self._check(other)
        return Share(self.ring.sub(self.value, other.value), self.ring)

    def __neg__(self) -> "Share":
        return Share(self.ring.neg(self.value), self.ring)

    @property
    def shape(self):
        return np.shape(self.value)


def split(x, ring: Ring, rng) -> tuple[Share, Share]:
    """Fresh 2-out-of-2 additive sharing of ``x`` (already reduced into ``ring``)."""
    x = ring.reduce(x)
    s0 = ring.random(rng, np.shape(x))
    return Share(s0, ring), Share(ring.sub(x, s0), ring)


def reconstruct(s0: Share, s1: Share) -> np.ndarray:
    if not isinstance(s0, Share) or not isinstance(s1, Share):
        raise TypeError("reconstruct takes two Share objects")
    if s0.ring != s1.ring:
        raise RingMismatchError(f"Z_{s0.ring.modulus} vs Z_{s1.ring.modulus}")
    return s0.ring.add(s0.value, s1.value)


def add_local(a: Share, b: Share) -> Share:
    return a + b


def sub_local(a: Share, b: Share) -> Share:
    return a - b


def add_public(a: Share, code, role: int) -> Share:
    """Add a public constant; only party 0 changes its share."""
    if role == 0:
        return Share(a.ring.add(a.value, code), a.ring)
    return a


def scale_by_public(a: Share, code, role: int, cfg: FixedPointConfig, truncate: bool = True) -> Share:
    """Multiply by a public encoded constant and restore the scale locally."""
    prod = a.ring.mul(a.value, code)
    if truncate:
        prod = truncate_share(prod, role, cfg)
    return Share(prod, a.ring)


def is_wrap(a, b, modulus: int) -> np.ndarray:
    """1 where a + b >= modulus (the modular sum wrapped), for a, b < modulus."""
    a = np.asarray(a, dtype=U64)
    b = np.asarray(b, dtype=U64)
    total = a + b
    if modulus == 1 << 64:
        return (total < a).astype(np.uint8)
    return (total >= U64(modulus)).astype(np.uint8)


def bit_decompose(x, nbits: int) -> np.ndarray:
    """Bits of ``x`` along a new last axis, least significant first."""
    x = np.asarray(x, dtype=U64)
    shifts = np.arange(nbits, dtype=U64)
    return ((x[..., None] >> shifts) & U64(1)).astype(np.uint8)


def bit_compose(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=U64)
    shifts = np.arange(bits.shape[-1], dtype=U64)
    return np.bitwise_or.reduce(bits << shifts, axis=-1)


def share_bits(x, nbits: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Share every bit of ``x`` over Z_67; result shape ``x.shape + (nbits,)``."""
    bits = bit_decompose(x, nbits)
    s0 = FIELD.random(rng, bits.shape)
    return s0, FIELD.sub(bits, s0)


def reconstruct_bits(s0, s1) -> np.ndarray:
    return FIELD.add(s0, s1)


def split_bool(bit, rng) -> tuple[np.ndarray, np.ndarray]:
    bit = np.asarray(bit, dtype=np.uint8)
    b0 = rng.bits(bit.shape)
    return b0, b0 ^ bit


def to_bytes(share: Share) -> bytes:
    """Canonical little-endian fixed-width serialization."""
    if share.ring.width == 8:
        return np.ascontiguousarray(share.value, dtype="<u8").tobytes()
    return np.ascontiguousarray(share.value, dtype=np.uint8).tobytes()


def from_bytes(data: bytes, ring: Ring, shape) -> Share:
    dtype = "<u8" if ring.width == 8 else np.uint8
    value = np.frombuffer(data, dtype=dtype).astype(ring.dtype).reshape(shape)
    return Share(ring.reduce(value), ring)
