"""Fixed-point codec between reals and ring elements.

Reals are stored two's-complement style in Z_{2^n} with ``dec`` fractional
bits: the top bit of a code is its sign.  All ring values are carried in
``numpy.uint64`` arrays; for ``n < 64`` every result is masked back into the
ring, for ``n == 64`` the machine wrap does the reduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

U64 = np.uint64


class RangeError(ValueError):
    """A real value does not fit the fixed-point format."""


@dataclass(frozen=True)
class FixedPointConfig:
    n: int = 64
    dec: int = 20

    def __post_init__(self):
        if not (0 < self.dec < self.n <= 64):
            raise ValueError(f"need 0 < dec < n <= 64, got n={self.n}, dec={self.dec}")

    @cached_property
    def modulus(self) -> int:
        return 1 << self.n

    @cached_property
    def half(self) -> int:
        return 1 << (self.n - 1)

    @cached_property
    def mask(self) -> np.uint64:
        return U64(self.modulus - 1)

    @cached_property
    def half_mask(self) -> np.uint64:
        return U64(self.half - 1)

    @property
    def scale(self) -> int:
        return 1 << self.dec

    @property
    def max_abs(self) -> float:
        """Exclusive bound on the magnitude of encodable reals."""
        return float(2 ** (self.n - self.dec - 1))

    @property
    def ulp(self) -> float:
        return 2.0 ** -self.dec


DEFAULT = FixedPointConfig()


def wrap(a, cfg: FixedPointConfig) -> np.ndarray:
    """Reduce a uint64 array into Z_{2^n}."""
    a = np.asarray(a, dtype=U64)
    if cfg.n == 64:
        return a
    return a & cfg.mask


def neg(a, cfg: FixedPointConfig) -> np.ndarray:
    return wrap(U64(0) - np.asarray(a, dtype=U64), cfg)


def encode(x, cfg: FixedPointConfig = DEFAULT) -> np.ndarray:
    """Map reals to ring codes: floor(x * 2^dec), negatives as 2^n - floor(|x| * 2^dec).

    Scalars come back as 0-d arrays.  Raises :class:`RangeError` if any
    ``|x| >= 2^(n-dec-1)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise RangeError("cannot encode non-finite values")
    if x.size and np.max(np.abs(x)) >= cfg.max_abs:
        raise RangeError(f"|x| must be < 2^{cfg.n - cfg.dec - 1}")
    mag = np.floor(np.abs(x) * cfg.scale)
    # float64 holds 53 bits; beyond that the conversion goes through Python ints
    if cfg.n - 1 > 53 and mag.size and mag.max() >= 2.0**53:
        flat = [int(v) for v in mag.ravel()]
        mag_u = np.array(flat, dtype=U64).reshape(mag.shape)
    else:
        mag_u = mag.astype(U64)
    out = np.where(x < 0, neg(mag_u, cfg), mag_u)
    return wrap(out, cfg)


def encode_nearest(x, cfg: FixedPointConfig = DEFAULT) -> np.ndarray:
    """Like :func:`encode` but rounds to the nearest code.

    Used for public constants, where floor would bias every use the same way.
    """
    x = np.asarray(x, dtype=np.float64)
    return encode(np.round(x * cfg.scale) / cfg.scale, cfg)


def to_signed(c, cfg: FixedPointConfig = DEFAULT) -> np.ndarray:
    """Two's-complement reading of ring codes as int64 (valid for n <= 64)."""
    c = wrap(c, cfg)
    signed = c.astype(np.int64)
    if cfg.n == 64:
        return signed
    return np.where(c >= U64(cfg.half), signed - (1 << cfg.n), signed)


def decode(c, cfg: FixedPointConfig = DEFAULT) -> np.ndarray | float:
    """Inverse of :func:`encode` up to quantization."""
    c = np.asarray(c, dtype=U64)
    signed = np.asarray(to_signed(c, cfg))
    out = signed.astype(np.float64) / cfg.scale
    return float(out) if out.ndim == 0 else out


def msb(c, cfg: FixedPointConfig = DEFAULT) -> np.ndarray:
    return (wrap(c, cfg) >> U64(cfg.n - 1)).astype(np.uint8)


def truncate_share(z, role: int, cfg: FixedPointConfig = DEFAULT, bits: int | None = None) -> np.ndarray:
    """Local truncation of one share of a double-scale product.

    Party 0 shifts its share right; party 1 negates, shifts and negates back.
    The reconstruction is off by at most one unit in the last place, except
    with probability about ``|z| / 2^n`` where the shares straddle the wrap.
    """
    shift = U64(cfg.dec if bits is None else bits)
    z = wrap(z, cfg)
    if role == 0:
        return z >> shift
    if role == 1:
        return neg(neg(z, cfg) >> shift, cfg)
    raise ValueError(f"truncation is a proxy operation, got role {role}")


def fx_mul(a, b, cfg: FixedPointConfig = DEFAULT) -> np.ndarray:
    """Plaintext fixed-point product of codes with an exact arithmetic shift."""
    sa = np.asarray(to_signed(a, cfg)).astype(object)
    sb = np.asarray(to_signed(b, cfg)).astype(object)
    prod = (sa * sb) >> cfg.dec
    flat = [int(v) % cfg.modulus for v in np.ravel(prod)]
    return np.array(flat, dtype=U64).reshape(np.shape(prod))


def ln_bound(cfg: FixedPointConfig = DEFAULT) -> float:
    """Largest |x ln b| whose power b^x survives quantization (both signs)."""
    return cfg.dec * math.log(2.0)
