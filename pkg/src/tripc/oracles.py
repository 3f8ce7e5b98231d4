"""Brute-force oracle suites for the base protocols on a small ring.

At n=8 every value (and, for MSB and MOC, every share split) fits in one
vectorized call, so each suite is a single protocol run compared against its
plaintext definition.  Used by the ``oracle-check`` command and the tests.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import protocols as pr
from .exponential import exp_oracle_codes, exponential, tree_truncation_bound, usable_range
from .numfmt import DEFAULT, FixedPointConfig, U64, decode, encode
from .prg import Prg
from .rings import Ring, share_bits
from .session import Session

SMALL = FixedPointConfig(8, 2)


@dataclass
class SuiteResult:
    name: str
    cases: int
    mismatches: int
    seconds: float
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.mismatches == 0 and self.cases > 0


def _grid(m: int):
    """Every (value, first share) pair over a ring of size m."""
    v = np.repeat(np.arange(m, dtype=U64), m)
    s0 = np.tile(np.arange(m, dtype=U64), m)
    return v, s0


def msb_suite(cfg: FixedPointConfig = SMALL, seed=0) -> SuiteResult:
    """All values times all share splits against the top bit."""
    t = time.perf_counter()
    full = Ring.full(cfg)
    x, s0 = _grid(cfg.modulus)
    s1 = full.sub(x, s0)
    sess = Session(cfg, seed=seed)
    out = sess.run(pr.most_significant_bit, (s0,), (s1,), (np.zeros_like(s0),))
    got = full.add(out[0], out[1])
    want = x >> U64(cfg.n - 1)
    return SuiteResult("msb", x.size, int(np.sum(got != want)), time.perf_counter() - t)


def moc_suite(cfg: FixedPointConfig = SMALL, seed=0) -> SuiteResult:
    """All half-ring values times all splits against the identity embedding."""
    t = time.perf_counter()
    half, full = Ring.half(cfg), Ring.full(cfg)
    x, s0 = _grid(half.modulus)
    s1 = half.sub(x, s0)
    sess = Session(cfg, seed=seed)
    out = sess.run(pr.modulus_conversion, (s0,), (s1,), (np.zeros_like(s0),))
    got = full.add(out[0], out[1])
    return SuiteResult("moc", x.size, int(np.sum(got != x)), time.perf_counter() - t)


def pc_suite(cfg: FixedPointConfig = SMALL, seed=0) -> SuiteResult:
    """All r, y over n-1 bits, both values of the masking bit."""
    t = time.perf_counter()
    nbits = cfg.n - 1
    r, y = _grid(1 << nbits)
    rng = Prg.from_seed("pc-suite", seed)
    b0, b1 = share_bits(r, nbits, rng)
    sess = Session(cfg, seed=seed)
    bad = 0
    for up in (0, 1):
        u = np.full(r.shape, up, dtype=np.uint8)
        out = sess.run(pr.private_compare, (b0, y, u, nbits), (b1, y, u, nbits), (None, np.zeros_like(y), None, nbits))
        bad += int(np.sum((out[0] ^ out[1] ^ u).astype(bool) != (r > y)))
    return SuiteResult("pc", 2 * r.size, bad, time.perf_counter() - t)


def cmp_suite(cfg: FixedPointConfig = SMALL, seed=0, splits: int = 4) -> SuiteResult:
    """Every pair whose difference cannot overflow, several splits each.

    Splits are the zero split, the all-ones split and ``splits - 2`` random
    ones per operand.
    """
    t = time.perf_counter()
    full = Ring.full(cfg)
    quarter = 1 << (cfg.n - 2)
    vals = np.arange(-quarter, quarter)
    xs = np.repeat(vals, vals.size)
    ys = np.tile(vals, vals.size)
    xc, yc = encode_int(xs, cfg), encode_int(ys, cfg)
    want = (xs < ys).astype(U64)
    rng = Prg.from_seed("cmp-suite", seed)
    firsts = [np.zeros_like(xc), np.full_like(xc, cfg.mask)]
    firsts += [full.random(rng, xc.shape) for _ in range(max(0, splits - 2))]
    x0 = np.concatenate(firsts)
    y0 = np.concatenate([full.random(rng, xc.shape) for _ in firsts])
    xt, yt = np.tile(xc, len(firsts)), np.tile(yc, len(firsts))
    x1, y1 = full.sub(xt, x0), full.sub(yt, y0)
    sess = Session(cfg, seed=seed)
    out = sess.run(pr.compare, (x0, y0), (x1, y1), (np.zeros_like(x0), np.zeros_like(y0)))
    got = full.add(out[0], out[1])
    bad = int(np.sum(got != np.tile(want, len(firsts))))
    return SuiteResult("cmp", x0.size, bad, time.perf_counter() - t)


def encode_int(v, cfg: FixedPointConfig) -> np.ndarray:
    """Raw two's complement ring codes of small signed integers."""
    return (np.asarray(v, dtype=np.int64) % cfg.modulus).astype(U64)


def exp_sweep(cfg: FixedPointConfig = DEFAULT, seed=0, points: int = 401, limit: float = 10.0,
              libm_tol: float = 1e-4) -> SuiteResult:
    """Private EXP over a grid against the fixed-point oracle and libm.

    A point fails if it leaves the documented tree bound around the oracle.
    The libm gap is reported in ``detail`` alongside the count of points
    above ``libm_tol``.
    """
    t = time.perf_counter()
    limit = min(limit, usable_range(math.e, cfg))
    xs = np.linspace(-limit, limit, points)
    codes = encode(xs, cfg)
    full = Ring.full(cfg)
    rng = Prg.from_seed("exp-sweep", seed)
    s0 = full.random(rng, codes.shape)
    s1 = full.sub(codes, s0)
    sess = Session(cfg, seed=seed)
    out = sess.run(exponential, (s0, math.e), (s1, math.e), (np.zeros_like(s0), math.e))
    got = decode(full.add(out[0], out[1]), cfg)
    oracle = decode(exp_oracle_codes(codes, math.e, cfg), cfg)
    bad = int(np.sum(np.abs(got - oracle) > tree_truncation_bound(oracle, cfg)))
    libm = np.abs(got - np.exp(xs))
    detail = {
        "max_oracle_gap": float(np.max(np.abs(got - oracle))),
        "max_libm_gap": float(np.max(libm)),
        "libm_over_tol": int(np.sum(libm > libm_tol)),
        "worst_x": float(xs[int(np.argmax(libm))]),
    }
    return SuiteResult("exp-sweep", xs.size, bad, time.perf_counter() - t, detail)


SUITES = {
    "moc": moc_suite,
    "msb": msb_suite,
    "cmp": cmp_suite,
    "pc": pc_suite,
    "exp": exp_sweep,
}


def run_suites(names, seed=0) -> list[SuiteResult]:
    names = list(SUITES) if not names or "all" in names else names
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}; choose from {', '.join(SUITES)}")
    return [SUITES[n](seed=seed) for n in names]

