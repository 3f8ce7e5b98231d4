import numpy as np
import pytest

from tripc import oracles
from tripc import protocols as pr
from tripc.correlated import common_coin
from tripc.numfmt import DEFAULT, FixedPointConfig, decode, encode
from tripc.prg import Prg
from tripc.rings import FIELD, Ring, share_bits
from tripc.session import Session

from conftest import run_shared, share

ULP = 2.0**-20
R = Ring.full(DEFAULT)


def last_rounds(sess, label):
    return [r.rounds for r in sess.merged_records() if r.label == label and r.level == 0][-1]


# ---------------------------------------------------------------- MUL / DP

def test_mul_example(sess):
    got = decode(run_shared(sess, pr.mul, encode([2.5]), encode([4.0])))
    assert abs(got[0] - 10.0) <= 2 * ULP
    assert last_rounds(sess, "MUL") == 2


def test_mul_by_zero(sess):
    got = decode(run_shared(sess, pr.mul, encode([123.456, -7.0]), encode([0.0, 0.0])))
    assert np.all(np.abs(got) <= 2 * ULP)


def test_mul_random_vectors(sess):
    gen = np.random.default_rng(0)
    x, y = gen.uniform(-10, 10, 1000), gen.uniform(-10, 10, 1000)
    got = decode(run_shared(sess, pr.mul, encode(x), encode(y)))
    want = decode(encode(x)) * decode(encode(y))
    assert np.max(np.abs(got - want)) <= 2 * ULP


def test_mul_shape_mismatch(sess):
    with pytest.raises(ValueError):
        run_shared(sess, pr.mul, encode([1.0, 2.0]), encode([1.0]))


def test_matmul(sess):
    gen = np.random.default_rng(1)
    a, b = gen.uniform(-2, 2, (3, 5)), gen.uniform(-2, 2, (5, 4))
    got = decode(run_shared(sess, pr.matmul, encode(a), encode(b)))
    assert np.max(np.abs(got - decode(encode(a)) @ decode(encode(b)))) <= 2 * ULP
    assert last_rounds(sess, "MATMUL") == 2


def test_dot_product_one_hot(sess):
    x = encode([[0, 1, 0, 0], [1, 0, 0, 0]])
    z = encode([[0, 1, 0, 0], [0, 0, 1, 0]])
    got = decode(run_shared(sess, pr.dot_product, x, z))
    assert np.allclose(got, [1.0, 0.0], atol=2 * ULP)
    assert last_rounds(sess, "DP") == 2


def test_dot_product_random(sess):
    gen = np.random.default_rng(2)
    x, y = gen.uniform(-1, 1, 64), gen.uniform(-1, 1, 64)
    got = decode(run_shared(sess, pr.dot_product, encode(x), encode(y)))
    assert abs(got - decode(encode(x)) @ decode(encode(y))) <= 64 * 2 * ULP


def test_mul_outputs_are_fresh_shares():
    sess = Session(seed=3)
    x0, x1 = share(encode(np.full(4000, 1.5)))
    y0, y1 = share(encode(np.full(4000, 2.0)))
    z = np.zeros(4000, np.uint64)
    out = sess.run(pr.mul, (x0, y0), (x1, y1), (z, z))
    # P0's truncated share is uniform below 2^(n-dec) and unrelated to its inputs
    top = ((out[0] >> np.uint64(43)) & np.uint64(1)).astype(float)
    assert np.all(out[0] < np.uint64(1 << 44))
    assert abs(top.mean() - 0.5) < 0.05
    assert abs(np.corrcoef(top, (x0 >> np.uint64(63)).astype(float))[0, 1]) < 0.05


# ---------------------------------------------------------------- PC

def _pc(sess, r, y, up, nbits):
    r = np.atleast_1d(np.asarray(r, dtype=np.uint64))
    y = np.atleast_1d(np.asarray(y, dtype=np.uint64))
    b0, b1 = share_bits(r, nbits, Prg.from_seed("pc"))
    u = np.full(r.shape, up, dtype=np.uint8)
    out = sess.run(pr.private_compare, (b0, y, u, nbits), (b1, y, u, nbits), (None, np.zeros_like(y), None, nbits))
    return (out[0] ^ out[1] ^ u).astype(int)


@pytest.mark.parametrize("up", [0, 1])
def test_pc_examples(up):
    sess = Session(seed=4)
    assert list(_pc(sess, [5, 3], [3, 5], up, 63)) == [1, 0]


def test_pc_largest_y_edge_case():
    # y = 2^l - 1: no r exceeds it, and the dummy path must say so
    sess = Session(seed=5)
    nbits = 63
    top = (1 << nbits) - 1
    r = [0, 12345, top - 1, top]
    assert list(_pc(sess, r, [top] * 4, 1, nbits)) == [0, 0, 0, 0]
    assert list(_pc(sess, r, [top] * 4, 0, nbits)) == [0, 0, 0, 0]


def test_pc_helper_message_is_blinded():
    # the helper sees a permutation of scaled field elements; with y = r exactly none is zero
    msg = pr.pc_proxy_message(0, common_coin(type("C", (), {"coin": Prg.from_seed(1), "role": None})()),
                              share_bits(np.array([9], dtype=np.uint64), 7, Prg.from_seed(2))[0],
                              np.array([9], dtype=np.uint64), np.array([0], dtype=np.uint8), 7)
    assert msg.shape == (1, 7)
    assert msg.max() < FIELD.modulus


def test_pc_exhaustive_small_ring():
    res = oracles.pc_suite()
    assert res.cases == 2 * 128 * 128 and res.mismatches == 0


# ---------------------------------------------------------------- MOC

def test_moc_examples():
    sess = Session(seed=6)
    half = Ring.half(DEFAULT)
    x = np.array([5, (1 << 63) - 1, 0], dtype=np.uint64)
    rng = Prg.from_seed("moc")
    s0 = half.random(rng, x.shape)
    s1 = half.sub(x, s0)
    out = sess.run(pr.modulus_conversion, (s0,), (s1,), (np.zeros_like(s0),))
    assert np.array_equal(R.add(out[0], out[1]), x)
    assert last_rounds(sess, "MOC") == 4


def test_moc_exhaustive_small_ring():
    res = oracles.moc_suite()
    assert res.cases == 128 * 128 and res.mismatches == 0


# ---------------------------------------------------------------- MSB / CMP

def test_msb_examples(sess):
    got = run_shared(sess, pr.most_significant_bit, encode([-3.42, 3.42, 0.0, -2.0**-20]))
    assert list(got) == [1, 0, 0, 1]
    assert last_rounds(sess, "MSB") == 4


def test_msb_random_full_ring(sess):
    x = R.random(Prg.from_seed("msb"), (5000,))
    got = run_shared(sess, pr.most_significant_bit, x)
    assert np.array_equal(got, x >> np.uint64(63))


def test_msb_exhaustive_small_ring():
    res = oracles.msb_suite()
    assert res.cases == 256 * 256 and res.mismatches == 0


def test_cmp_examples(sess):
    got = run_shared(sess, pr.compare, encode([5.0, 3.0, 7.5, -1.0]), encode([3.0, 5.0, 7.5, 1.0]))
    assert list(got) == [0, 1, 0, 1]
    assert last_rounds(sess, "CMP") == 4


def test_cmp_exhaustive_small_ring():
    res = oracles.cmp_suite()
    assert res.cases == 4 * 128 * 128 and res.mismatches == 0


def test_msb_other_width():
    cfg = FixedPointConfig(16, 4)
    sess = Session(cfg, seed=7)
    ring = Ring.full(cfg)
    x = np.arange(0, 1 << 16, 7, dtype=np.uint64)
    got = run_shared(sess, pr.most_significant_bit, x)
    assert np.array_equal(got, x >> np.uint64(15))
    assert ring.modulus == 1 << 16


# ---------------------------------------------------------------- MUX

def test_mux_selects(sess):
    x, y = encode([1.5, -2.0, 3.0]), encode([9.0, 8.0, -7.0])
    b = np.array([0, 1, 1], dtype=np.uint64)
    got = decode(run_shared(sess, pr.multiplexer, x, y, b))
    assert list(got) == [1.5, 8.0, -7.0]
    assert last_rounds(sess, "MUX") == 2


def test_mux_exact_ring_algebra(sess):
    gen_rng = Prg.from_seed("mux")
    x, y = R.random(gen_rng, (3000,)), R.random(gen_rng, (3000,))
    b = gen_rng.bits((3000,)).astype(np.uint64)
    got = run_shared(sess, pr.multiplexer, x, y, b)
    assert np.array_equal(got, R.sub(x, R.mul(b, R.sub(x, y))))


def test_mux_broadcasts(sess):
    x = encode(np.arange(6.0).reshape(2, 3))
    y = encode(-np.arange(6.0).reshape(2, 3))
    b = np.array([[1], [0]], dtype=np.uint64)
    x0, x1 = share(x)
    y0, y1 = share(y)
    b0, b1 = share(np.broadcast_to(b, (2, 3)))
    out = sess.run(pr.multiplexer, (x0, y0, b0[:, :1]), (x1, y1, b1[:, :1]), (x0 * 0, y0 * 0, b0[:, :1] * 0))
    got = decode(R.add(out[0], out[1]))
    assert np.array_equal(got, [[0, -1, -2], [3, 4, 5]])


# ---------------------------------------------------------------- opening

def test_open_to_helper(sess):
    x0, x1 = share(np.array([3, 4], dtype=np.uint64))
    out = sess.run(pr.open_shares, (x0, True), (x1, True), (np.zeros(2, np.uint64), True))
    for o in out:
        assert list(o) == [3, 4]
