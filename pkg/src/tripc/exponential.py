"""Public base raised to a secret fixed-point power, square-and-multiply style.

With ``|x|`` in fixed point, ``b^|x| = prod_p b^(bit_p * 2^(p - dec))``.  The
private path picks the sign with an MSB and a MUX, extracts all n bits of
``|x|`` with one batched MSB over shifted copies, picks per bit either the
precomputed contribution or 1, and multiplies everything in a balanced tree.

Contribution ``k`` belongs to bit ``n-1-k`` of the magnitude (the bit the
``k``-fold left shift moves into the sign position) and is therefore
``b^(2^(n-1-k-dec))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numfmt import DEFAULT, FixedPointConfig, RangeError, U64, decode, encode, encode_nearest, fx_mul, neg, wrap
from .protocols import most_significant_bit, mul, multiplexer


@dataclass(frozen=True)
class ContributionTables:
    pos: np.ndarray  # nearest code of b^(2^e) per bit, saturated at the largest code
    neg: np.ndarray  # nearest code of b^(-2^e), zero where it underflows
    one: np.ndarray


def _power_code(log_value: float, cfg: FixedPointConfig) -> int:
    """Code of exp(log_value), saturating rather than overflowing."""
    top = cfg.half - 1
    if log_value >= math.log(cfg.max_abs):
        return top
    if log_value < math.log(cfg.ulp) - 1:
        return 0
    return min(int(encode_nearest(math.exp(log_value), cfg)), top)


def contribution_tables(base: float, cfg: FixedPointConfig = DEFAULT) -> ContributionTables:
    if not base > 0:
        raise ValueError(f"base must be positive, got {base}")
    ln_b = math.log(base)
    exps = [2.0 ** (cfg.n - 1 - k - cfg.dec) for k in range(cfg.n)]
    pos = np.array([_power_code(e * ln_b, cfg) for e in exps], dtype=U64)
    negc = np.array([_power_code(-e * ln_b, cfg) for e in exps], dtype=U64)
    return ContributionTables(pos, negc, np.full(cfg.n, int(encode(1.0, cfg)), dtype=U64))


def _tree_levels(width: int) -> int:
    return max(0, math.ceil(math.log2(width))) if width > 1 else 0


def exponential(ctx, x, base: float) -> np.ndarray:
    """Shares of ``base ** decode(x)``.

    Inputs outside the usable range (``|x ln base| > dec ln 2``) produce
    meaningless results; check with :func:`plaintext_exp_oracle` if unsure.
    """
    cfg = ctx.cfg
    x = np.asarray(x, dtype=U64)
    shape = x.shape
    n = cfg.n
    tables = contribution_tables(base, cfg)
    R = ctx.ring
    with ctx.op("EXP"):
        sign = most_significant_bit(ctx, x)
        neg_x = R.neg(x)
        pos_row = np.broadcast_to(ctx.public(tables.pos), shape + (n,))
        neg_row = np.broadcast_to(ctx.public(tables.neg), shape + (n,))
        left = np.concatenate([x[..., None], pos_row], axis=-1)
        right = np.concatenate([neg_x[..., None], neg_row], axis=-1)
        picked = multiplexer(ctx, left, right, sign[..., None])
        mag, contrib = picked[..., 0], picked[..., 1:]

        shifts = np.arange(n, dtype=U64)
        copies = wrap(mag[..., None] << shifts, cfg)
        bits = most_significant_bit(ctx, copies)
        ones = np.broadcast_to(ctx.public(tables.one), shape + (n,))
        factors = multiplexer(ctx, ones, contrib, bits)

        one = ctx.public(encode(1.0, cfg))
        while factors.shape[-1] > 1:
            if factors.shape[-1] % 2:
                pad = np.broadcast_to(one, shape + (1,))
                factors = np.concatenate([factors, pad], axis=-1)
            half = factors.shape[-1] // 2
            factors = mul(ctx, np.ascontiguousarray(factors[..., :half]),
                          np.ascontiguousarray(factors[..., half:]))
        return factors[..., 0]


def usable_range(base: float, cfg: FixedPointConfig = DEFAULT) -> float:
    """Largest |x| for which base**x survives quantization in both signs."""
    return cfg.dec * math.log(2.0) / abs(math.log(base)) if base != 1 else math.inf


def exp_oracle_codes(codes, base: float, cfg: FixedPointConfig = DEFAULT) -> np.ndarray:
    """Bit-for-bit plaintext model of the private path on ring codes."""
    codes = np.atleast_1d(np.asarray(codes, dtype=U64))
    tables = contribution_tables(base, cfg)
    negative = (codes >> U64(cfg.n - 1)).astype(bool)
    mag = np.where(negative, neg(codes, cfg), codes)
    contrib = np.where(negative[:, None], tables.neg[None, :], tables.pos[None, :])
    shifts = np.arange(cfg.n, dtype=U64)
    bits = (wrap(mag[:, None] << shifts, cfg) >> U64(cfg.n - 1)).astype(bool)
    factors = np.where(bits, contrib, tables.one[None, :])
    one = encode(1.0, cfg)
    while factors.shape[1] > 1:
        if factors.shape[1] % 2:
            factors = np.concatenate([factors, np.full((len(codes), 1), one, dtype=U64)], axis=1)
        h = factors.shape[1] // 2
        factors = fx_mul(factors[:, :h], factors[:, h:], cfg)
    return factors[:, 0]


def plaintext_exp_oracle(x, base: float = math.e, cfg: FixedPointConfig = DEFAULT):
    """Fixed-point square-and-multiply evaluation of ``base ** x``.

    Raises :class:`RangeError` when ``|x ln base|`` exceeds ``dec ln 2``.
    """
    arr = np.asarray(x, dtype=np.float64)
    if not base > 0:
        raise ValueError(f"base must be positive, got {base}")
    limit = usable_range(base, cfg)
    if arr.size and np.max(np.abs(arr)) > limit:
        raise RangeError(f"|x| must be <= {limit:.4f} for base {base} at dec={cfg.dec}")
    out = decode(exp_oracle_codes(encode(arr, cfg).ravel(), base, cfg), cfg)
    return float(out[0]) if arr.ndim == 0 else np.asarray(out).reshape(arr.shape)


def tree_truncation_bound(value, cfg: FixedPointConfig = DEFAULT) -> np.ndarray:
    """Documented gap between private EXP and the oracle.

    Each multiplication level adds at most 2^(1-dec) of truncation error,
    amplified by at most the magnitude of the final product.
    """
    levels = _tree_levels(cfg.n)
    return levels * 2.0 ** (1 - cfg.dec) * np.maximum(1.0, np.abs(value))
