"""Inverse square root of a secret-shared Gram matrix.

The proxies hide G behind a common orthogonal matrix M and scalars
``alp``, ``s``: the helper sees only ``alp * M G M^T + s I``, whose
eigenvalues are ``alp * lambda + s`` and eigenvectors ``M E``.  The helper
re-masks the eigenvalues with its own ``Delta`` and ``alpha``, P1 turns those
into a partial unmasker, and P0 ends up holding ``Delta * lambda``.  One
multiplication then yields shares of ``lambda^(-1/2)``, and two more build
``E diag(lambda^(-1/2)) E^T``.

``alp`` and ``s`` are drawn as integers and M is encoded with its own
fraction width, so the masked matrix is formed exactly in the ring with no
truncation.  The shift ``s I`` is added after the conjugation, which equals
``M (alp G + s I) M^T`` for orthogonal M but keeps the rounding of M's
encoding from leaking into the shift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eigen import inverse_sqrt as plaintext_invsqrt, jacobi_eigh
from .numfmt import DEFAULT, FixedPointConfig, U64, decode, encode, to_signed, truncate_share
from .protocols import matmul, most_significant_bit, mul, open_shares
from .rings import split
from .transport import Kind, PartyRole

MIN_EIGENVALUE = 0.05


class InvSqrtAbort(RuntimeError):
    """The unmasked spectrum is too close to singular to invert safely."""


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class MaskBounds:
    """Sampling boxes for the masks (real-valued magnitudes).

    ``min_s`` and ``min_alpha`` default to the smallest values the range
    constraints admit for the given maxima.
    """

    max_lambda: float
    max_alp: float = 2.0**5
    max_s: float = 2.0**10
    max_m: float = 1.0
    max_delta: float = 2.0**10
    max_alpha: float = 2.0**30
    min_s: float | None = None
    min_alpha: float | None = None

    @classmethod
    def for_size(cls, q: int, **kw) -> "MaskBounds":
        return cls(max_lambda=float(q), **kw)

    @property
    def lower_s(self) -> float:
        return self.min_s if self.min_s is not None else 2 * self.max_lambda + 1

    @property
    def lower_alpha(self) -> float:
        if self.min_alpha is not None:
            return self.min_alpha
        return 2 * min(self.max_delta, self.max_alp * self.max_lambda + self.max_s) + 1


@dataclass
class MaskParams:
    m: np.ndarray
    alp: float
    s: float
    delta: np.ndarray
    alpha_mask: float


def _limits(cfg: FixedPointConfig) -> tuple[float, float]:
    return 2.0 ** (cfg.n - 2 * cfg.dec - 1), 2.0 ** (cfg.n - cfg.dec - 1)


def _check(q: int, cfg: FixedPointConfig, lam, alp, s_lo, s_hi, m, delta, a_lo, a_hi) -> list[str]:
    prod_cap, value_cap = _limits(cfg)
    bad = []
    if not (m * m < prod_cap / (alp + s_hi) and m * m < value_cap / (q * q * (alp + s_hi))):
        bad.append("const_orth: max(M)^2 < min(2^(n-2dec-1)/(alp+s), 2^(n-dec-1)/(q^2 (alp+s)))")
    if not (delta < prod_cap / (alp * lam + s_hi) and delta < (value_cap - a_hi) / (alp * lam + s_hi)):
        bad.append("const_delta: max(Delta) < min(2^(n-2dec-1), 2^(n-dec-1) - alpha)/(alp lambda + s)")
    if not (alp < prod_cap / (m * m) - s_hi
            and alp < value_cap / (q * q * m * m) - s_hi
            and alp < (prod_cap - s_hi * delta) / (delta * lam)
            and alp < (value_cap - a_hi - s_hi * delta) / (delta * lam)):
        bad.append("const_alp: max(alp) below the four bounds implied by M, Delta and alpha")
    if not s_lo > 2 * q:
        bad.append("const_min_s: min(s) > 2q")
    if not (s_hi < prod_cap / (m * m) - alp
            and s_hi < value_cap / (q * q * m * m) - alp
            and s_hi < prod_cap / delta - alp * lam
            and s_hi < (value_cap - a_hi) / delta - alp * lam):
        bad.append("const_max_s: max(s) below the four bounds implied by M, Delta and alpha")
    if not a_lo > 2 * min(delta, alp * lam + s_hi):
        bad.append("const_min_alpha: min(alpha) > 2 min(max(Delta), max(alp) max(lambda) + max(s))")
    if not a_hi < value_cap - prod_cap:
        bad.append("const_max_alpha: max(alpha) < 2^(n-dec-1) - 2^(n-2dec-1)")
    return bad


def validate_mask_ranges(params, q: int, cfg: FixedPointConfig = DEFAULT) -> list[str]:
    """Violated range constraints (empty when all hold).

    Accepts either drawn :class:`MaskParams` or a :class:`MaskBounds` box.
    """
    if isinstance(params, MaskBounds):
        b = params
        return _check(q, cfg, b.max_lambda, b.max_alp, b.lower_s, b.max_s, b.max_m,
                      b.max_delta, b.lower_alpha, b.max_alpha)
    bad = []
    m = np.asarray(params.m, dtype=np.float64)
    if m.shape != (q, q) or np.max(np.abs(m @ m.T - np.eye(q))) > 1e-9:
        bad.append("orthogonality: M M^T = I within 1e-9")
    delta = np.asarray(params.delta, dtype=np.float64)
    if delta.size == 0 or np.min(delta) <= 0 or params.alp <= 0 or params.s <= 0 or params.alpha_mask <= 0:
        bad.append("positivity: alp, s, Delta and alpha must be positive")
    bad += _check(q, cfg, float(q), params.alp, params.s, params.s, float(np.max(np.abs(m))),
                  float(np.max(delta)), params.alpha_mask, params.alpha_mask)
    return bad


# ---------------------------------------------------------------- sampling

def random_orthogonal(q: int, gen: np.random.Generator) -> np.ndarray:
    """Orthogonal factor of a Gaussian matrix, sign-fixed to be Haar distributed."""
    z = gen.standard_normal((q, q))
    qmat, r = np.linalg.qr(z)
    return qmat * np.sign(np.diag(r))


def _check_feasible(bounds: MaskBounds, q: int, cfg: FixedPointConfig) -> None:
    bad = validate_mask_ranges(bounds, q, cfg)
    if bad or bounds.lower_s > bounds.max_s or bounds.lower_alpha > bounds.max_alpha:
        raise ConfigurationError(f"infeasible mask ranges for q={q}, n={cfg.n}, dec={cfg.dec}: {bad or 'empty box'}")


def draw_proxy_masks(gen: np.random.Generator, q: int, bounds: MaskBounds):
    m = random_orthogonal(q, gen)
    alp = int(gen.integers(1, int(bounds.max_alp) + 1))
    s = int(gen.integers(math.ceil(bounds.lower_s), int(bounds.max_s) + 1))
    return m, alp, s


def draw_helper_masks(gen: np.random.Generator, q: int, bounds: MaskBounds, cfg: FixedPointConfig):
    delta = gen.uniform(1.0, bounds.max_delta, q)
    alpha = gen.uniform(bounds.lower_alpha, bounds.max_alpha)
    # round through the codec so every party works with identical values
    return decode(encode(delta, cfg), cfg), float(decode(encode(alpha, cfg), cfg))


def generate_mask_params(q: int, cfg: FixedPointConfig = DEFAULT, rng=None,
                         bounds: MaskBounds | None = None) -> MaskParams:
    bounds = bounds or MaskBounds.for_size(q)
    _check_feasible(bounds, q, cfg)
    gen = rng.generator() if hasattr(rng, "generator") else np.random.default_rng(rng)
    m, alp, s = draw_proxy_masks(gen, q, bounds)
    delta, alpha = draw_helper_masks(gen, q, bounds, cfg)
    return MaskParams(m, float(alp), float(s), delta, alpha)


def mask_fraction_bits(q: int, cfg: FixedPointConfig, bounds: MaskBounds) -> int:
    """Fraction bits for M so that the exact masked matrix fits the ring."""
    headroom = math.ceil(math.log2(bounds.max_alp * q + bounds.max_s)) + 1
    bits = (cfg.n - 1 - headroom - cfg.dec) // 2
    if bits < 8:
        raise ConfigurationError(f"no room to encode the orthogonal mask at n={cfg.n}, dec={cfg.dec}")
    return bits


def masked_share(g_share, m_int, alp: int, s: int, role: int, f_m: int, cfg: FixedPointConfig) -> np.ndarray:
    """One proxy's ``alp * M G_i M^T + i * s I`` at scale 2^(dec + 2 f_m)."""
    g = np.asarray(g_share, dtype=U64)
    inner = np.asarray(m_int, dtype=U64) @ (g * U64(alp)) @ np.asarray(m_int, dtype=U64).T
    if role == 1:
        shift = U64((s << (cfg.dec + 2 * f_m)) % cfg.modulus)
        inner = inner + np.eye(len(g), dtype=U64) * shift
    return inner if cfg.n == 64 else inner & cfg.mask


# ---------------------------------------------------------------- protocol

def invsqrt(ctx, g, bounds: MaskBounds | None = None) -> np.ndarray:
    """Shares of ``G^(-1/2)`` for a shared symmetric positive-definite G.

    Raises :class:`InvSqrtAbort` on every party if some eigenvalue of G is
    below 0.05.
    """
    cfg = ctx.cfg
    g = np.asarray(g, dtype=U64)
    q = g.shape[0]
    bounds = bounds or MaskBounds.for_size(q)
    _check_feasible(bounds, q, cfg)
    f_m = mask_fraction_bits(q, cfg, bounds)
    R = ctx.ring
    with ctx.op("INVSQRT"):
        if ctx.is_helper:
            return _helper(ctx, q, f_m, bounds)
        m, alp, s = draw_proxy_masks(ctx.coin.generator(), q, bounds)
        m_int = to_ring(np.round(m * 2.0**f_m), cfg)
        ctx.send(PartyRole.HELPER, Kind.INVSQRT_G, masked_share(g, m_int, alp, s, ctx.i, f_m, cfg))

        if ctx.i == 1:
            delta_c, alpha_c, e_masked = ctx.recv(PartyRole.HELPER, Kind.INVSQRT_EIG)
            unmasker = float(s) * decode(delta_c, cfg) + float(decode(alpha_c, cfg))
            ctx.send(PartyRole.P0, Kind.INVSQRT_U, encode(unmasker, cfg))
            guard = R.neg(encode(MIN_EIGENVALUE * decode(delta_c, cfg), cfg))
        else:
            lam2_c, e_masked = ctx.recv(PartyRole.HELPER, Kind.INVSQRT_EIG)
            unmasker_c = ctx.recv(PartyRole.P1, Kind.INVSQRT_U)[0]
            lam3 = (decode(lam2_c, cfg) - decode(unmasker_c, cfg)) / alp
            guard = encode(lam3, cfg)

        low = most_significant_bit(ctx, guard)
        _abort_if_low(open_shares(ctx, low, to_helper=True))

        if ctx.i == 0:
            x, y = encode(lam3 ** -0.5, cfg), np.zeros(q, dtype=U64)
        else:
            x, y = np.zeros(q, dtype=U64), encode(np.sqrt(decode(delta_c, cfg)), cfg)
        lam_inv = mul(ctx, x, y)

        e = truncate_share(R.reduce(m_int.T @ e_masked), ctx.i, cfg, bits=f_m)
        scaled = mul(ctx, e, np.ascontiguousarray(np.broadcast_to(lam_inv, (q, q))))
        return matmul(ctx, scaled, np.ascontiguousarray(e.T))


def _helper(ctx, q: int, f_m: int, bounds: MaskBounds) -> np.ndarray:
    cfg = ctx.cfg
    R = ctx.ring
    g0 = ctx.recv(PartyRole.P0, Kind.INVSQRT_G)[0]
    g1 = ctx.recv(PartyRole.P1, Kind.INVSQRT_G)[0]
    masked = to_signed(R.add(g0, g1), cfg).astype(np.float64) / 2.0 ** (cfg.dec + 2 * f_m)
    lam1, e1 = jacobi_eigh((masked + masked.T) / 2)
    delta, alpha = draw_helper_masks(ctx.rng.generator(), q, bounds, cfg)
    lam2 = lam1 * delta + alpha
    e0_share, e1_share = split(encode(e1, cfg), R, ctx.rng)
    ctx.send(PartyRole.P1, Kind.INVSQRT_EIG, encode(delta, cfg), encode(alpha, cfg), e1_share.value)
    ctx.send(PartyRole.P0, Kind.INVSQRT_EIG, encode(lam2, cfg), e0_share.value)

    low = most_significant_bit(ctx, ctx.placeholder(q))
    _abort_if_low(open_shares(ctx, low, to_helper=True))
    mul(ctx, ctx.placeholder(q), ctx.placeholder(q))
    mul(ctx, ctx.placeholder((q, q)), ctx.placeholder((q, q)))
    return matmul(ctx, ctx.placeholder((q, q)), ctx.placeholder((q, q)))


def _abort_if_low(bits) -> None:
    bits = np.asarray(bits)
    if np.any(bits != 0):
        raise InvSqrtAbort(f"{int(np.count_nonzero(bits))} eigenvalue(s) below {MIN_EIGENVALUE}; "
                           "the matrix is too ill-conditioned to invert")


def to_ring(values, cfg: FixedPointConfig) -> np.ndarray:
    """Integers (possibly negative) to ring elements."""
    ints = np.asarray(values, dtype=np.int64)
    return ints.astype(U64) & cfg.mask if cfg.n < 64 else ints.astype(U64)

