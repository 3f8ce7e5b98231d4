"""Base protocols: multiplication, dot product, private compare, modulus
conversion, most significant bit, comparison and multiplexer.

Every function takes a :class:`~tripc.session.ProtocolContext` and this
party's share(s) as ``uint64`` arrays (any shape), and returns this party's
share of the result.  The helper passes zero placeholders of the right shape
and receives placeholders back.  All ops are vectorized: one frame per
message step whatever the array size, so round counts do not depend on it.
"""

from __future__ import annotations

import numpy as np

from .correlated import common_coin, deal_moc_randomness, deal_triples
from .numfmt import U64, truncate_share
from .rings import FIELD_P, bit_decompose, is_wrap, split, split_bool
from .transport import Kind, PartyRole

P0, P1, HELPER = PartyRole.P0, PartyRole.P1, PartyRole.HELPER


def _u64(x) -> np.ndarray:
    return np.asarray(x, dtype=U64)


def _check_same_shape(x, y, what: str) -> None:
    if np.shape(x) != np.shape(y):
        raise ValueError(f"{what}: shape mismatch {np.shape(x)} vs {np.shape(y)}")


# ---------------------------------------------------------------- opening

def open_shares(ctx, x, to_helper: bool = False) -> np.ndarray:
    """Reveal a shared value to both proxies (and optionally the helper)."""
    with ctx.op("OPEN"):
        if ctx.is_helper:
            if not to_helper:
                return ctx.placeholder(np.shape(x))
            a = ctx.recv(P0, Kind.ABORT)[0]
            b = ctx.recv(P1, Kind.ABORT)[0]
            return ctx.ring.add(a, b)
        x = _u64(x)
        if to_helper:
            ctx.send(HELPER, Kind.ABORT, x)
        theirs = ctx.exchange(ctx.other, Kind.OPEN, x)[0]
        return ctx.ring.add(x, theirs)


# ---------------------------------------------------------------- multiplication

def _beaver(ctx, x, y, matmul: bool, truncate: bool):
    R = ctx.ring
    shape_out = np.shape(x @ y) if matmul else np.shape(x)
    batch = deal_triples(ctx, np.shape(x), np.shape(y), matmul=matmul)
    if ctx.is_helper:
        return ctx.placeholder(shape_out)
    a, b, c = batch.take()
    e_i = R.sub(x, a)
    f_i = R.sub(y, b)
    e_o, f_o = ctx.exchange(ctx.other, Kind.OPEN, e_i, f_i)
    e = R.add(e_i, e_o)
    f = R.add(f_i, f_o)
    if matmul:
        z = R.reduce(a @ f + e @ b + c)
        if ctx.i == 0:
            z = R.add(z, e @ f)
    else:
        z = R.add(R.add(R.mul(f, a), R.mul(e, b)), c)
        if ctx.i == 0:
            z = R.add(z, R.mul(e, f))
    return truncate_share(z, ctx.i, ctx.cfg) if truncate else z


def mul(ctx, x, y, truncate: bool = True) -> np.ndarray:
    """Elementwise product.  ``truncate=False`` for integer-scale operands."""
    x, y = _u64(x), _u64(y)
    _check_same_shape(x, y, "mul")
    with ctx.op("MUL"):
        return _beaver(ctx, x, y, matmul=False, truncate=truncate)


def matmul(ctx, x, y, truncate: bool = True) -> np.ndarray:
    """Matrix product backed by a matrix triple (c = a @ b)."""
    x, y = _u64(x), _u64(y)
    if x.ndim < 1 or y.ndim < 1 or x.shape[-1] != y.shape[-2 if y.ndim > 1 else 0]:
        raise ValueError(f"matmul: incompatible shapes {x.shape} and {y.shape}")
    with ctx.op("MATMUL"):
        return _beaver(ctx, x, y, matmul=True, truncate=truncate)


def dot_product(ctx, x, y) -> np.ndarray:
    """Inner product along the last axis."""
    x, y = _u64(x), _u64(y)
    _check_same_shape(x, y, "dot_product")
    with ctx.op("DP"):
        prod = mul(ctx, x, y)
        if ctx.is_helper:
            return ctx.placeholder(x.shape[:-1])
        return ctx.ring.reduce(prod.sum(axis=-1, dtype=U64))


# ---------------------------------------------------------------- private compare

def _suffix_sums(w: np.ndarray) -> np.ndarray:
    """Per position p, the sum of w over positions above p."""
    total = np.cumsum(w[:, ::-1], axis=1)[:, ::-1]
    return total - w


def pc_proxy_message(i: int, coin, r_bits, y, g, nbits: int) -> np.ndarray:
    """Masked, scaled and shuffled field elements one proxy sends the helper.

    Reconstructed by the helper, a row holds exactly one zero iff the
    predicate ``(r > y) xor g`` is 1.  Bits are ordered least significant
    first, so "higher positions" are larger indices.
    """
    y = _u64(y).ravel()
    count = y.size
    s = coin.nonzero_field((count, nbits))
    u = coin.nonzero_field((count, nbits))
    perm = coin.permutations(count, nbits)
    r = np.asarray(r_bits, dtype=np.int64).reshape(count, nbits)
    g = np.asarray(g, dtype=np.int64).reshape(count, 1)
    top = U64((1 << nbits) - 1)

    yb = bit_decompose(y, nbits).astype(np.int64)
    w = (r + i * yb - 2 * yb * r) % FIELD_P
    c_gt = (i * yb - r + i + _suffix_sums(w)) % FIELD_P

    # g = 1 flips the predicate: test y + 1 > r instead of r > y
    tb = bit_decompose((y + U64(1)) & top, nbits).astype(np.int64)
    w = (r + i * tb - 2 * tb * r) % FIELD_P
    c_le = (-i * tb + r + i + _suffix_sums(w)) % FIELD_P
    # y = 2^nbits - 1 makes y + 1 wrap; y >= r then always holds, so emit
    # dummies with exactly one zero (at the lowest position)
    sign = 1 - 2 * i
    dummy = np.where(np.arange(nbits) == 0, sign * u, (1 - i) * (u + 1) - i * u) % FIELD_P
    edge = (y == top)[:, None]
    c_le = np.where(edge, dummy, c_le)

    c = np.where(g == 1, c_le, c_gt)
    d = (s * c) % FIELD_P
    return np.take_along_axis(d, perm, axis=1).astype(np.uint8)


def pc_helper_result(d0, d1) -> np.ndarray:
    """1 per row iff the reconstructed field elements contain a zero."""
    total = (np.asarray(d0, dtype=np.int64) + np.asarray(d1, dtype=np.int64)) % FIELD_P
    return (total == 0).any(axis=1).astype(np.uint8)


def private_compare(ctx, r_bits, y, u_prime, nbits: int | None = None) -> np.ndarray:
    """Boolean share of ``(r > y) xor u_prime`` for public ``y``.

    ``r_bits`` are Z_67 shares of the bits of ``r`` (least significant
    first, ``nbits`` of them, default n-1); ``u_prime`` is a common bit.
    """
    nbits = ctx.cfg.n - 1 if nbits is None else nbits
    shape = np.shape(y)
    with ctx.op("PC"):
        if ctx.is_helper:
            d0 = ctx.recv(P0, Kind.PC)[0]
            d1 = ctx.recv(P1, Kind.PC)[0]
            beta = pc_helper_result(d0, d1)
            b0, b1 = split_bool(beta, ctx.rng)
            ctx.send(P0, Kind.PC_RESULT, b0.reshape(shape))
            ctx.send(P1, Kind.PC_RESULT, b1.reshape(shape))
            return np.zeros(shape, dtype=np.uint8)
        d = pc_proxy_message(ctx.i, common_coin(ctx), r_bits, y, u_prime, nbits)
        ctx.send(HELPER, Kind.PC, d)
        return ctx.recv(HELPER, Kind.PC_RESULT)[0]


# ---------------------------------------------------------------- modulus conversion

def modulus_conversion(ctx, x_half) -> np.ndarray:
    """Shares over Z_{2^(n-1)} to shares of the same value over Z_{2^n}."""
    x_half = _u64(x_half)
    shape = x_half.shape
    half, full, L2 = ctx.half, ctx.ring, U64(ctx.cfg.half)
    with ctx.op("MOC"):
        rand = deal_moc_randomness(ctx, shape, send_wrap=True)
        if ctx.is_helper:
            private_compare(ctx, None, ctx.placeholder(shape), None)
            return ctx.placeholder(shape)
        coin = common_coin(ctx)
        u_prime = coin.bits(shape)
        y_i = half.add(x_half, rand.r_half)
        y_o = ctx.exchange(ctx.other, Kind.OPEN, y_i)[0]
        y = half.add(y_i, y_o)
        beta = private_compare(ctx, rand.r_bits, y, u_prime)
        if ctx.i == 0:
            beta = beta ^ u_prime
        c = rand.w_bool ^ beta
        y_lift = y_i
        if ctx.i == 0:
            y_lift = full.add(y_i, is_wrap(y_i, y_o, half.modulus).astype(U64) * L2)
        return full.sub(y_lift, full.add(rand.r_half, c.astype(U64) * L2))


# ---------------------------------------------------------------- most significant bit

def most_significant_bit(ctx, x) -> np.ndarray:
    """Shares of the top bit of ``x`` (integer scale, 0 or 1)."""
    x = _u64(x)
    shape = x.shape
    half, full, L2 = ctx.half, ctx.ring, U64(ctx.cfg.half)
    nbits = ctx.cfg.n - 1
    with ctx.op("MSB"):
        state = deal_moc_randomness(ctx, shape, send_wrap=False)
        if ctx.is_helper:
            d0 = ctx.recv(P0, Kind.PC)[0]
            a0 = ctx.recv(P0, Kind.MSB_A)
            d1 = ctx.recv(P1, Kind.PC)[0]
            a1 = ctx.recv(P1, Kind.MSB_A)
            g_prime = pc_helper_result(d0, d1).reshape(shape)
            shift = (g_prime ^ state.w).astype(U64) * L2
            out = []
            for j in range(2):
                a = full.sub(full.add(a0[j], a1[j]), shift)
                out.append(split(a >> U64(ctx.cfg.n - 1), full, ctx.rng))
            ctx.send(P0, Kind.SHARES, out[0][0].value, out[1][0].value)
            ctx.send(P1, Kind.SHARES, out[0][1].value, out[1][1].value)
            return ctx.placeholder(shape)
        coin = common_coin(ctx)
        f = coin.bits(shape)
        g = coin.bits(shape)
        d_i = x & ctx.cfg.half_mask
        y_i = half.add(d_i, state.r_half)
        y_o = ctx.exchange(ctx.other, Kind.OPEN, y_i)[0]
        y = half.add(y_i, y_o)
        y_lift = y_i
        if ctx.i == 1:
            y_lift = full.add(y_i, is_wrap(y_o, y_i, half.modulus).astype(U64) * L2)
        base = full.sub(full.sub(y_lift, x), state.r_half)
        a = [full.add(base, U64(ctx.i) * f.astype(U64) * L2),
             full.add(base, U64(ctx.i) * (1 - f).astype(U64) * L2)]
        msg = pc_proxy_message(ctx.i, coin, state.r_bits, y, g, nbits)
        ctx.send(HELPER, Kind.PC, msg)
        ctx.send(HELPER, Kind.MSB_A, *a)
        z0, z1 = ctx.recv(HELPER, Kind.SHARES)
        return np.where((f ^ g) == 0, z0, z1)


def compare(ctx, x, y) -> np.ndarray:
    """Shares of 0 where x >= y and 1 where x < y (signed reading)."""
    x, y = _u64(x), _u64(y)
    _check_same_shape(x, y, "compare")
    with ctx.op("CMP"):
        return most_significant_bit(ctx, ctx.ring.sub(x, y))


# ---------------------------------------------------------------- multiplexer

def multiplexer(ctx, x, y, b) -> np.ndarray:
    """Shares of x where b = 0 and y where b = 1.

    ``b`` is carried at integer scale (0 or 1, not the fixed-point encoding
    of 1), so ``b * (x - y)`` needs no truncation.  Operands broadcast.
    """
    x, y, b = np.broadcast_arrays(_u64(x), _u64(y), _u64(b))
    shape = x.shape
    R = ctx.ring
    with ctx.op("MUX"):
        if ctx.is_helper:
            m2, m3 = ctx.recv(P0, Kind.MUX_MASK)
            m5, m6 = ctx.recv(P1, Kind.MUX_MASK)
            z = R.add(R.mul(m2, m5), R.mul(m3, m6))
            z0, z1 = split(z, R, ctx.rng)
            ctx.send(P0, Kind.SHARES, z0.value)
            ctx.send(P1, Kind.SHARES, z1.value)
            return ctx.placeholder(shape)
        coin = common_coin(ctx)
        r0, r1, r2, r3 = (coin.ring(R, shape) for _ in range(4))
        diff = R.sub(x, y)
        keep = R.sub(x, R.mul(b, diff))
        if ctx.i == 0:
            own = R.add(R.add(keep, R.mul(r1, b)), R.add(R.mul(r2, diff), R.mul(r2, r3)))
            masks = (R.add(b, r0), R.add(diff, r3))
        else:
            own = R.add(R.add(keep, R.mul(r0, diff)), R.add(R.mul(r0, r1), R.mul(r3, b)))
            masks = (R.add(diff, r1), R.add(b, r2))
        ctx.send(HELPER, Kind.MUX_MASK, *masks)
        z = ctx.recv(HELPER, Kind.SHARES)[0]
        return R.sub(own, z)
