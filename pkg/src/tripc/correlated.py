"""Helper-dealt correlated randomness and the proxies' common coin.

The helper acts as an online dealer by default.  For replay benchmarks the
multiplication triples can instead be generated ahead of time into one file
per proxy and consumed from a :class:`TripleStore`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numfmt import FixedPointConfig, U64
from .prg import Prg
from .rings import FIELD, Ring, is_wrap, share_bits, split, split_bool
from .transport import Kind, PartyRole

FILE_MAGIC = b"TPCM"
FILE_HEADER = struct.Struct("<4sBBBQ")
KIND_MUL_TRIPLE = 1


class TripleReuseError(RuntimeError):
    pass


class MaterialExhausted(RuntimeError):
    pass


# ---------------------------------------------------------------- common coin

class CommonCoin:
    """Typed draws from the proxies' shared stream.

    Both proxies must make identical draws in identical order; the byte
    counter travels with every proxy-to-proxy frame so a divergence is
    caught at the next message.
    """

    def __init__(self, prg: Prg):
        self.prg = prg

    @property
    def counter(self) -> int:
        return self.prg.drawn

    def bits(self, shape=()) -> np.ndarray:
        return self.prg.bits(shape)

    def ring(self, ring: Ring, shape=()) -> np.ndarray:
        return ring.random(self.prg, shape)

    def nonzero_field(self, shape=()) -> np.ndarray:
        return self.prg.nonzero_field(FIELD.modulus, shape)

    def permutations(self, count: int, length: int) -> np.ndarray:
        return self.prg.permutations(count, length)


def common_coin(ctx) -> CommonCoin:
    if ctx.coin is None:
        raise RuntimeError(f"{ctx.role.name} holds no common coin")
    return CommonCoin(ctx.coin)


# ---------------------------------------------------------------- triples

@dataclass
class TripleBatch:
    """One party's shares of a batch of triples (elementwise or matrix)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    used: bool = field(default=False, repr=False)

    def take(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self.used:
            raise TripleReuseError("this triple batch was already consumed")
        self.used = True
        return self.a, self.b, self.c


def _triple(ring: Ring, rng, shape_a, shape_b, matmul: bool):
    a = ring.random(rng, shape_a)
    b = ring.random(rng, shape_b)
    c = ring.reduce(a @ b) if matmul else ring.mul(a, b)
    return a, b, c


def deal_triples(ctx, shape_a, shape_b=None, matmul: bool = False) -> TripleBatch | None:
    """Helper draws and sends triple shares; proxies receive theirs.

    For ``matmul`` the identity is ``c = a @ b`` with ``a`` shaped like the
    left operand and ``b`` like the right one.  Returns ``None`` on the
    helper.
    """
    shape_b = shape_a if shape_b is None else shape_b
    if ctx.triple_store is not None and not matmul:
        # offline mode: proxies replay pre-generated files, the helper idles
        return None if ctx.is_helper else ctx.triple_store.take(shape_a)
    if ctx.is_helper:
        a, b, c = _triple(ctx.ring, ctx.rng, shape_a, shape_b, matmul)
        parts = [split(v, ctx.ring, ctx.rng) for v in (a, b, c)]
        for role in (PartyRole.P0, PartyRole.P1):
            ctx.send(role, Kind.TRIPLE, *(p[int(role)].value for p in parts))
        return None
    a, b, c = ctx.recv(PartyRole.HELPER, Kind.TRIPLE)
    return TripleBatch(a, b, c)


# ---------------------------------------------------------------- MOC / MSB randomness

@dataclass
class MocRandomness:
    """One proxy's view: r over the half ring, its bits over Z_67, and (MOC only) w."""

    r_half: np.ndarray
    r_bits: np.ndarray
    w_bool: np.ndarray | None


@dataclass
class HelperMocState:
    """What the helper keeps after dealing: the wrap bit of r's sharing."""

    w: np.ndarray
    r: np.ndarray


def deal_moc_randomness(ctx, shape, send_wrap: bool = True):
    """Deal a random r in Z_{2^{n-1}} with bit shares (n-1 bits over Z_67).

    With ``send_wrap`` the boolean shares of ``w = isWrap(r0, r1, 2^{n-1})``
    go to the proxies (modulus conversion); otherwise the helper keeps ``w``
    (most significant bit).  The helper returns a :class:`HelperMocState`.
    """
    nbits = ctx.cfg.n - 1
    if ctx.is_helper:
        half = ctx.half
        r = half.random(ctx.rng, shape)
        r0, r1 = split(r, half, ctx.rng)
        b0, b1 = share_bits(r, nbits, ctx.rng)
        w = is_wrap(r0.value, r1.value, half.modulus)
        w0, w1 = split_bool(w, ctx.rng)
        msgs = {PartyRole.P0: [r0.value, b0], PartyRole.P1: [r1.value, b1]}
        if send_wrap:
            msgs[PartyRole.P0].append(w0)
            msgs[PartyRole.P1].append(w1)
        for role, arrays in msgs.items():
            ctx.send(role, Kind.MOC_RAND, *arrays)
        return HelperMocState(w=w, r=r)
    arrays = ctx.recv(PartyRole.HELPER, Kind.MOC_RAND)
    w = arrays[2] if send_wrap else None
    return MocRandomness(arrays[0], arrays[1], w)


# ---------------------------------------------------------------- offline files

def write_triple_files(paths, cfg: FixedPointConfig, count: int, rng: Prg | None = None) -> None:
    """Pre-generate ``count`` elementwise triples into one file per proxy."""
    rng = rng or Prg()
    ring = Ring.full(cfg)
    a, b, c = _triple(ring, rng, (count,), (count,), False)
    parts = [split(v, ring, rng) for v in (a, b, c)]
    for idx, path in enumerate(paths):
        with open(path, "wb") as fh:
            fh.write(FILE_HEADER.pack(FILE_MAGIC, cfg.n, cfg.dec, KIND_MUL_TRIPLE, count))
            for p in parts:
                fh.write(np.ascontiguousarray(p[idx].value, dtype="<u8").tobytes())


class TripleStore:
    """Sequential reader of a pre-generated triple file."""

    def __init__(self, a, b, c, cfg: FixedPointConfig):
        self.a, self.b, self.c = a, b, c
        self.cfg = cfg
        self.pos = 0

    @property
    def remaining(self) -> int:
        return len(self.a) - self.pos

    @classmethod
    def load(cls, path, cfg: FixedPointConfig) -> "TripleStore":
        data = Path(path).read_bytes()
        if len(data) < FILE_HEADER.size:
            raise ValueError(f"{path}: not a correlated-material file")
        magic, n, dec, kind, count = FILE_HEADER.unpack_from(data, 0)
        if magic != FILE_MAGIC or kind != KIND_MUL_TRIPLE:
            raise ValueError(f"{path}: not a triple file")
        if (n, dec) != (cfg.n, cfg.dec):
            raise ValueError(f"{path}: made for n={n}, dec={dec}")
        body = np.frombuffer(data, dtype="<u8", offset=FILE_HEADER.size).astype(U64)
        if body.size != 3 * count:
            raise ValueError(f"{path}: expected {3 * count} words, found {body.size}")
        a, b, c = body.reshape(3, count)
        return cls(a, b, c, cfg)

    def take(self, shape) -> TripleBatch:
        size = int(np.prod(shape, dtype=np.int64))
        if size > self.remaining:
            raise MaterialExhausted(f"need {size} triples, {self.remaining} left")
        sl = slice(self.pos, self.pos + size)
        self.pos += size
        return TripleBatch(self.a[sl].reshape(shape), self.b[sl].reshape(shape), self.c[sl].reshape(shape))
