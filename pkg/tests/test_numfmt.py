import numpy as np
import pytest

from tripc.numfmt import (DEFAULT, FixedPointConfig, RangeError, decode, encode, encode_nearest, fx_mul, msb,
                          truncate_share)
from tripc.prg import Prg
from tripc.rings import Ring, split


def test_encode_examples():
    assert int(encode(1.0)) == 1 << 20
    assert int(encode(-1.0)) == (1 << 64) - (1 << 20)
    assert int(encode(0.0)) == 0
    assert decode(encode(3.25)) == 3.25


def test_negative_uses_floor_of_magnitude():
    # -x is stored as 2^n - floor(|x| 2^dec)
    x = -(1 + 0.7 * 2.0**-20)
    assert int(encode(x)) == (1 << 64) - ((1 << 20) + 0)


def test_sign_bit():
    assert int(msb(encode(-3.42))) == 1
    assert int(msb(encode(3.42))) == 0


def test_roundtrip_within_ulp():
    xs = np.random.default_rng(0).uniform(-1e6, 1e6, 10000)
    assert np.max(np.abs(decode(encode(xs)) - xs)) <= 2.0**-20


def test_nearest_within_half_ulp():
    xs = np.random.default_rng(1).uniform(-100, 100, 10000)
    assert np.max(np.abs(decode(encode_nearest(xs)) - xs)) <= 2.0**-21


def test_range_error():
    with pytest.raises(RangeError):
        encode(2.0**43)
    with pytest.raises(RangeError):
        encode(float("nan"))
    encode(2.0**43 - 1)


def test_config_validation():
    with pytest.raises(ValueError):
        FixedPointConfig(64, 64)
    with pytest.raises(ValueError):
        FixedPointConfig(65, 20)
    small = FixedPointConfig(8, 2)
    assert int(encode(-1.0, small)) == 256 - 4
    assert decode(encode(-1.0, small), small) == -1.0


def test_truncation_of_shares_within_one_ulp():
    cfg = DEFAULT
    rng = Prg.from_seed("trunc")
    gen = np.random.default_rng(2)
    x = gen.uniform(-10, 10, 20000)
    y = gen.uniform(-10, 10, 20000)
    prod = Ring.full(cfg).mul(encode(x), encode(y))
    a, b = split(prod, Ring.full(cfg), rng)
    t = Ring.full(cfg).add(truncate_share(a.value, 0), truncate_share(b.value, 1))
    want = decode(encode(x)) * decode(encode(y))
    assert np.max(np.abs(decode(t) - want)) <= 2.0**-20 + 1e-12


def test_truncation_failure_rate_matches_wrap_probability():
    # shares straddling the wrap fail with probability |z| / 2^n
    cfg = DEFAULT
    r = Ring.full(cfg)
    z = encode(np.full(20000, 2.0**22), cfg) << np.uint64(cfg.dec)  # |z| = 2^62
    a, b = split(z, r, Prg.from_seed("wrap"))
    t = r.add(truncate_share(a.value, 0), truncate_share(b.value, 1))
    failed = np.mean(np.abs(decode(t) - 2.0**22) > 1)
    assert 0.22 < failed < 0.28


def test_public_scaling_example():
    # lambda = 0.5 times shares of 2.0 gives 1.0 within one ulp
    rng = Prg.from_seed("scale")
    a, b = split(encode(2.0), Ring.full(DEFAULT), rng)
    lam = encode(0.5)
    r = Ring.full(DEFAULT)
    out = r.add(truncate_share(r.mul(a.value, lam), 0), truncate_share(r.mul(b.value, lam), 1))
    assert abs(decode(out) - 1.0) <= 2.0**-20


def test_truncate_rejects_helper():
    with pytest.raises(ValueError):
        truncate_share(np.uint64(5), 2)


def test_fx_mul_exact_floor():
    assert decode(fx_mul(encode(2.5), encode(4.0))) == 10.0
    assert decode(fx_mul(encode(-1.5), encode(2.0))) == -3.0
