import math

import numpy as np
import pytest

from tripc import protocols as pr
from tripc.correlated import CommonCoin
from tripc.exponential import exponential
from tripc.invsqrt import MaskBounds, draw_proxy_masks, invsqrt, mask_fraction_bits
from tripc.numfmt import DEFAULT, encode, to_signed
from tripc.prg import Prg, derive_key
from tripc.private_rkn import SharedRknModel, outsource_model, outsource_sequence, private_inference
from tripc.rings import FIELD, Ring
from tripc.rkn import encode_sequence, make_synthetic_model, without_gram
from tripc.session import Session
from tripc.transport import HELPER_BOUND, Kind, PartyRole

from conftest import share
from test_invsqrt import well_conditioned_gram

R = Ring.full(DEFAULT)


def recorded_run(fn, codes, extra=(), seed=None):
    pairs = [share(c) for c in codes]
    sess = Session(seed=seed, record=True)
    sess.run(fn, tuple(p[0] for p in pairs) + extra, tuple(p[1] for p in pairs) + extra,
             tuple(np.zeros_like(p[0]) for p in pairs) + extra)
    return sess


def wire(sess):
    """Every message sent by every party, in order, setup excluded."""
    return [(c.role, e) for c in sess.contexts for e in c.transcript
            if e.direction == "send" and e.kind != Kind.SETUP]


def test_fresh_runs_differ_at_every_masked_position():
    codes = (encode(np.linspace(-4, 4, 40)),)
    a, b = (wire(recorded_run(exponential, codes, (math.e,))) for _ in range(2))
    assert [(r, e.kind, e.peer) for r, e in a] == [(r, e.kind, e.peer) for r, e in b]
    same = {"field": [0, 0], "bit": [0, 0]}
    for (_, ea), (_, eb) in zip(a, b):
        for xa, xb in zip(ea.arrays, eb.arrays):
            if ea.kind == Kind.MSB_A:
                group = "bit"  # one masked bit carried in the top position
            elif xa.dtype == np.uint64:
                assert np.all(xa != xb), f"{ea.kind.name} repeated a ring element"
                continue
            else:
                group = "field"
            same[group][0] += int(np.sum(xa == xb))
            same[group][1] += xa.size
    # small domains collide by chance (1/67 and 1/2); structure would show far more
    field_rate = same["field"][0] / same["field"][1]
    bit_rate = same["bit"][0] / same["bit"][1]
    assert field_rate < 2 / FIELD.modulus
    assert 0.4 < bit_rate < 0.6


def _replay_coin(seed, drawn):
    prg = Prg(derive_key("coin", derive_key("session", seed)))
    prg.bytes(drawn)
    return CommonCoin(prg)


def test_mux_helper_inputs_match_mask_formulas():
    seed = 21
    gen = np.random.default_rng(0)
    x, y = encode(gen.uniform(-5, 5, 30)), encode(gen.uniform(-5, 5, 30))
    b = gen.integers(0, 2, 30).astype(np.uint64)
    (x0, x1), (y0, y1), (b0, b1) = share(x), share(y), share(b)
    sess = Session(seed=seed, record=True)
    drawn = sess[0].coin.drawn
    sess.run(pr.multiplexer, (x0, y0, b0), (x1, y1, b1), (x0 * 0, y0 * 0, b0 * 0))
    coin = _replay_coin(seed, drawn)
    r0, r1, r2, r3 = (coin.ring(R, x.shape) for _ in range(4))
    got = {e.peer: e.arrays for e in sess[2].transcript if e.kind == Kind.MUX_MASK}
    assert np.array_equal(got[PartyRole.P0][0], R.add(b0, r0))
    assert np.array_equal(got[PartyRole.P0][1], R.add(R.sub(x0, y0), r3))
    assert np.array_equal(got[PartyRole.P1][0], R.add(R.sub(x1, y1), r1))
    assert np.array_equal(got[PartyRole.P1][1], R.add(b1, r2))


def test_invsqrt_helper_input_trace():
    seed, q = 22, 16
    g = well_conditioned_gram(q, 5)
    g0, g1 = share(encode(g))
    sess = Session(seed=seed, record=True)
    drawn = sess[0].coin.drawn
    sess.run(invsqrt, (g0,), (g1,), (np.zeros_like(g0),))
    bounds = MaskBounds.for_size(q)
    f_m = mask_fraction_bits(q, DEFAULT, bounds)
    _, alp, s = draw_proxy_masks(_replay_coin(seed, drawn).prg.generator(), q, bounds)
    parts = [e.arrays[0] for e in sess[2].transcript if e.kind == Kind.INVSQRT_G]
    g_masked = to_signed(R.add(*parts)).astype(np.float64) / 2.0 ** (DEFAULT.dec + 2 * f_m)
    want = alp * np.trace(g) + q * s
    assert abs(np.trace(g_masked) - want) <= 1e-3 * want
    # and the raw Gram is nowhere in the helper's view
    assert not np.allclose(g_masked, g, atol=0.1)


@pytest.mark.parametrize("compute_invsqrt", [False, True])
def test_helper_only_receives_masked_kinds(compute_invsqrt):
    model = make_synthetic_model(4, 2, seed=3)
    if compute_invsqrt:
        model = without_gram(model)
    m0, m1 = outsource_model(model, Prg.from_seed(1))
    x0, x1 = outsource_sequence(encode_sequence("ACGTA"), Prg.from_seed(2))
    sess = Session(seed=4, record=True)
    sess.run(private_inference, (m0, x0), (m1, x1), (SharedRknModel.placeholder(m0.info), np.zeros_like(x0)))
    kinds = {e.kind for e in sess[2].transcript if e.direction == "recv"}
    assert kinds <= HELPER_BOUND
    assert (Kind.INVSQRT_G in kinds) == compute_invsqrt
